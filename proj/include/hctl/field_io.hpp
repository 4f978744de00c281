#pragma once

#include <string>

#include "hctl/fields.hpp"
#include "hctl/mesh.hpp"

namespace hctl {

/// CSV with header `t,x[,y],value`, one row per (level, node) in level-major
/// order, every number printed with 17 significant digits.
void export_field(const SpaceTimeField& field, const Grids& grids, const std::string& path);

/// Inverse of export_field. Throws hctl::Error on I/O or layout mismatch.
SpaceTimeField import_field(const std::string& path, const Grids& grids);

}  // namespace hctl

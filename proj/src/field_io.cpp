#include "hctl/field_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "hctl/errors.hpp"

namespace hctl {

namespace {

std::string header(int dim) { return dim == 2 ? "t,x,y,value" : "t,x,value"; }

void append_number(std::string& line, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    line += buf;
}

}  // namespace

void export_field(const SpaceTimeField& field, const Grids& grids, const std::string& path) {
    const auto& space = grids.space;
    if (field.nodes() != space.size() || field.levels() != grids.time.levels()) {
        throw PreconditionError("field shape does not match the grids");
    }
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw Error("cannot open " + path + " for writing: " + std::strerror(errno));
    std::string line = header(space.dim()) + "\n";
    std::fputs(line.c_str(), f);
    for (int k = 0; k < field.levels(); ++k) {
        for (int node = 0; node < space.size(); ++node) {
            line.clear();
            append_number(line, grids.time.t(k));
            for (int axis = 0; axis < space.dim(); ++axis) {
                line += ',';
                append_number(line, space.coord(node, axis));
            }
            line += ',';
            append_number(line, field(k, node));
            line += '\n';
            std::fputs(line.c_str(), f);
        }
    }
    const bool failed = std::ferror(f) != 0;
    if (std::fclose(f) != 0 || failed) throw Error("write failed for " + path + ": " + std::strerror(errno));
}

SpaceTimeField import_field(const std::string& path, const Grids& grids) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path + " for reading: " + std::strerror(errno));
    const auto& space = grids.space;
    std::string line;
    if (!std::getline(in, line) || line != header(space.dim())) {
        throw Error(path + ": expected header '" + header(space.dim()) + "'");
    }
    SpaceTimeField field(grids);
    const long expected = static_cast<long>(space.size()) * grids.time.levels();
    long row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (row >= expected) throw Error(path + ": more rows than the grid has entries");
        const auto last = line.rfind(',');
        if (last == std::string::npos) throw Error(path + ": malformed row " + std::to_string(row + 2));
        char* end = nullptr;
        const double v = std::strtod(line.c_str() + last + 1, &end);
        if (end == line.c_str() + last + 1) throw Error(path + ": bad value on row " + std::to_string(row + 2));
        field(static_cast<int>(row / space.size()), static_cast<int>(row % space.size())) = v;
        ++row;
    }
    if (row != expected) {
        std::ostringstream msg;
        msg << path << ": expected " << expected << " rows, found " << row;
        throw Error(msg.str());
    }
    return field;
}

}  // namespace hctl

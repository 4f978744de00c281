#include "hctl/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "hctl/errors.hpp"

namespace hctl {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

/// Strict view of one JSON object: every key must be consumed before finish().
class Block {
public:
    Block(const json& node, std::string path) : path_(std::move(path)) {
        if (node.is_null()) return;
        if (!node.is_object()) throw ConfigError(path_, "expected an object");
        node_ = &node;
    }

    bool has(const std::string& key) const { return node_ && node_->contains(key); }

    const json* take(const std::string& key) {
        used_.insert(key);
        if (!has(key)) return nullptr;
        return &(*node_)[key];
    }

    Block sub(const std::string& key) {
        const json* j = take(key);
        static const json null_node;
        return Block(j ? *j : null_node, join(path_, key));
    }

    double number(const std::string& key, double fallback) {
        const json* j = take(key);
        if (!j) return fallback;
        if (!j->is_number()) throw ConfigError(join(path_, key), "expected a number");
        const double v = j->get<double>();
        if (!std::isfinite(v)) throw ConfigError(join(path_, key), "must be finite");
        return v;
    }

    long integer(const std::string& key, long fallback) {
        const json* j = take(key);
        if (!j) return fallback;
        if (!j->is_number_integer()) throw ConfigError(join(path_, key), "expected an integer");
        return j->get<long>();
    }

    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
        const json* j = take(key);
        if (!j) return fallback;
        if (!j->is_number_integer() || (j->is_number_integer() && !j->is_number_unsigned() && j->get<long>() < 0)) {
            throw ConfigError(join(path_, key), "expected a non-negative integer");
        }
        return j->get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool fallback) {
        const json* j = take(key);
        if (!j) return fallback;
        if (!j->is_boolean()) throw ConfigError(join(path_, key), "expected true or false");
        return j->get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback) {
        const json* j = take(key);
        if (!j) return fallback;
        if (!j->is_string()) throw ConfigError(join(path_, key), "expected a string");
        return j->get<std::string>();
    }

    std::string choice(const std::string& key, const std::string& fallback, const std::vector<std::string>& allowed) {
        std::string v = string(key, fallback);
        for (const auto& a : allowed) {
            if (a == v) return v;
        }
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        throw ConfigError(join(path_, key), "'" + v + "' is not one of: " + list);
    }

    std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) {
        const json* j = take(key);
        if (!j) return fallback;
        return to_numbers(*j, join(path_, key));
    }

    static std::vector<double> to_numbers(const json& j, const std::string& field) {
        if (!j.is_array()) throw ConfigError(field, "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (!j[i].is_number()) throw ConfigError(field + "[" + std::to_string(i) + "]", "expected a number");
            out.push_back(j[i].get<double>());
            if (!std::isfinite(out.back())) throw ConfigError(field + "[" + std::to_string(i) + "]", "must be finite");
        }
        return out;
    }

    const std::string& path() const { return path_; }
    std::string field(const std::string& key) const { return join(path_, key); }

    void finish() const {
        if (!node_) return;
        for (const auto& item : node_->items()) {
            if (!used_.count(item.key())) throw ConfigError(join(path_, item.key()), "unknown key");
        }
    }

private:
    const json* node_ = nullptr;
    std::string path_;
    std::set<std::string> used_;
};

std::vector<Interval> parse_box(const json& j, const std::string& field, int dim) {
    if (!j.is_array() || static_cast<int>(j.size()) != dim) {
        throw ConfigError(field, "expected " + std::to_string(dim) + " [lo, hi] pairs");
    }
    std::vector<Interval> box;
    for (int axis = 0; axis < dim; ++axis) {
        const auto pair = Block::to_numbers(j[axis], field + "[" + std::to_string(axis) + "]");
        if (pair.size() != 2) throw ConfigError(field + "[" + std::to_string(axis) + "]", "expected [lo, hi]");
        if (!(pair[1] > pair[0])) throw ConfigError(field + "[" + std::to_string(axis) + "]", "needs lo < hi");
        box.push_back({pair[0], pair[1]});
    }
    return box;
}

std::string describe(const std::vector<Interval>& box) {
    std::ostringstream out;
    for (std::size_t i = 0; i < box.size(); ++i) {
        out << (i ? " x " : "") << "(" << box[i].lo << ", " << box[i].hi << ")";
    }
    return out.str();
}

Point to_point(const std::vector<double>& v) {
    Point p(static_cast<int>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) p[static_cast<int>(i)] = v[i];
    return p;
}

SmallMatrix parse_matrix(const json* j, const std::string& field, int dim, const SmallMatrix& fallback) {
    if (!j) return fallback;
    SmallMatrix m(dim, dim);
    if (j->is_number()) {
        m.setZero();
        for (int i = 0; i < dim; ++i) m(i, i) = j->get<double>();
        return m;
    }
    if (!j->is_array() || static_cast<int>(j->size()) != dim) {
        throw ConfigError(field, "expected a number or a " + std::to_string(dim) + "x" + std::to_string(dim) +
                                     " nested array");
    }
    for (int r = 0; r < dim; ++r) {
        const auto row = Block::to_numbers((*j)[r], field + "[" + std::to_string(r) + "]");
        if (static_cast<int>(row.size()) != dim) throw ConfigError(field, "matrix rows must have " + std::to_string(dim) + " entries");
        for (int c = 0; c < dim; ++c) m(r, c) = row[c];
    }
    return m;
}

Point parse_vector(Block& b, const std::string& key, int dim, double fill) {
    const auto v = b.numbers(key, std::vector<double>(dim, fill));
    if (static_cast<int>(v.size()) != dim) throw ConfigError(b.field(key), "expected " + std::to_string(dim) + " entries");
    return to_point(v);
}

/// prod_i sin(pi (x_i - lo_i) / (hi_i - lo_i)).
double sine_mode(const SpaceGrid& grid, int node) {
    double v = 1.0;
    for (int axis = 0; axis < grid.dim(); ++axis) {
        const auto& iv = grid.bounds(axis);
        v *= std::sin(std::numbers::pi * (grid.coord(node, axis) - iv.lo) / (iv.hi - iv.lo));
    }
    return v;
}

SpaceField custom_space(Block& b, const Grids& grids) {
    const auto v = b.numbers("values", {});
    if (static_cast<int>(v.size()) != grids.space.size()) {
        throw ConfigError(b.field("values"), "expected " + std::to_string(grids.space.size()) + " node values");
    }
    return SpaceField(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

SpaceTimeField custom_spacetime(Block& b, const Grids& grids) {
    const json* j = b.take("values");
    const std::string field = b.field("values");
    if (!j || !j->is_array() || static_cast<int>(j->size()) != grids.time.levels()) {
        throw ConfigError(field, "expected " + std::to_string(grids.time.levels()) + " levels of node values");
    }
    SpaceTimeField f(grids);
    for (int k = 0; k < grids.time.levels(); ++k) {
        const auto row = Block::to_numbers((*j)[k], field + "[" + std::to_string(k) + "]");
        if (static_cast<int>(row.size()) != grids.space.size()) {
            throw ConfigError(field + "[" + std::to_string(k) + "]",
                              "expected " + std::to_string(grids.space.size()) + " node values");
        }
        for (int n = 0; n < grids.space.size(); ++n) f(k, n) = row[n];
    }
    return f;
}

SpaceTimeField parse_trajectory(Block b, const Grids& grids, const std::string& fallback_preset) {
    const std::string preset = b.choice("preset", fallback_preset, {"zero", "t_sin", "constant", "custom"});
    SpaceTimeField f(grids);
    if (preset == "custom") {
        f = custom_spacetime(b, grids);
    } else if (preset == "t_sin") {
        const double amp = b.number("amplitude", 1.0);
        for (int k = 0; k < grids.time.levels(); ++k) {
            for (int n = 0; n < grids.space.size(); ++n) f(k, n) = amp * grids.time.t(k) * sine_mode(grids.space, n);
        }
    } else if (preset == "constant") {
        f.values().setConstant(b.number("amplitude", 1.0));
    }
    b.finish();
    return f;
}

SpaceField parse_target(Block b, const Grids& grids) {
    const std::string preset = b.choice("preset", "sin", {"sin", "bump", "zero", "custom"});
    const auto& space = grids.space;
    SpaceField f(space.size());
    if (preset == "custom") {
        f = custom_space(b, grids);
    } else if (preset == "sin") {
        const double amp = b.number("amplitude", 0.1);
        for (int n = 0; n < space.size(); ++n) f[n] = amp * sine_mode(space, n);
    } else if (preset == "bump") {
        const double amp = b.number("amplitude", 0.1);
        const double width = b.number("width", 0.1);
        if (!(width > 0.0)) throw ConfigError(b.field("width"), "must be > 0");
        std::vector<double> mid;
        for (int axis = 0; axis < space.dim(); ++axis) {
            mid.push_back(0.5 * (space.bounds(axis).lo + space.bounds(axis).hi));
        }
        const Point center = parse_vector(b, "center", space.dim(), 0.0);
        const Point c = b.has("center") ? center : to_point(mid);
        for (int n = 0; n < space.size(); ++n) {
            const double r2 = (space.point(n) - c).squaredNorm();
            f[n] = amp * std::exp(-0.5 * r2 / (width * width));
        }
    }
    b.finish();
    return f;
}

}  // namespace

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key.path=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &doc;
    std::stringstream parts(key);
    std::string part;
    std::vector<std::string> path;
    while (std::getline(parts, part, '.')) path.push_back(part);
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (path[i].empty()) throw ConfigError(key, "empty path component");
        if (node->is_null()) *node = json::object();
        if (!node->is_object()) throw ConfigError(key, "'" + path[i] + "' is below a non-object value");
        node = &(*node)[path[i]];
    }
    *node = std::move(value);
}

Scenario parse_scenario(const json& doc) {
    Scenario s;
    s.source = doc;
    Block root(doc, "");

    // grid
    Block grid = root.sub("grid");
    std::vector<Interval> bounds;
    if (grid.has("bounds")) {
        const json* jb = grid.take("bounds");
        if (!jb->is_array() || jb->empty() || jb->size() > 2) throw ConfigError(grid.field("bounds"), "expected 1 or 2 [lo, hi] pairs");
        bounds = parse_box(*jb, grid.field("bounds"), static_cast<int>(jb->size()));
    } else {
        grid.take("bounds");
        bounds = {{0.0, 1.0}};
    }
    const int dim = static_cast<int>(bounds.size());
    std::vector<int> n_interior;
    {
        const auto v = grid.numbers("n_interior", std::vector<double>(dim, 63.0));
        if (static_cast<int>(v.size()) != dim) throw ConfigError(grid.field("n_interior"), "one count per axis");
        for (double x : v) {
            if (x != std::floor(x)) throw ConfigError(grid.field("n_interior"), "counts must be integers");
            n_interior.push_back(static_cast<int>(x));
        }
    }
    const double T = grid.number("T", 1.0);
    const long M = grid.integer("M", 64);
    grid.finish();
    try {
        s.grids = build_grid(bounds, n_interior, T, static_cast<int>(M));
    } catch (const SizingError& e) {
        throw ConfigError("grid", e.what());
    }
    const auto& space = s.grids.space;

    // coefficients
    Block coef = root.sub("coefficients");
    try {
        const std::string kind = coef.choice("preset", "constant", {"constant", "affine"});
        const SmallMatrix identity = SmallMatrix::Identity(dim, dim);
        if (kind == "constant") {
            const Point mu = parse_vector(coef, "mu", dim, 0.0);
            const SmallMatrix a = parse_matrix(coef.take("a"), coef.field("a"), dim, identity);
            const double lambda = coef.number("lambda", min_eigenvalue(a));
            s.coefficients = std::make_shared<CoefficientModel>(CoefficientModel::constant(mu, a, lambda));
        } else {
            const Point mu0 = parse_vector(coef, "mu", dim, 0.0);
            const SmallMatrix a0 = parse_matrix(coef.take("a"), coef.field("a"), dim, identity);
            std::vector<Point> mu_slope(dim, Point::Zero(dim));
            std::vector<SmallMatrix> a_slope(dim, SmallMatrix::Zero(dim, dim));
            if (const json* js = coef.take("mu_slope")) {
                if (!js->is_array() || static_cast<int>(js->size()) != dim) {
                    throw ConfigError(coef.field("mu_slope"), "one drift vector per axis");
                }
                for (int i = 0; i < dim; ++i) {
                    const auto v = Block::to_numbers((*js)[i], coef.field("mu_slope") + "[" + std::to_string(i) + "]");
                    if (static_cast<int>(v.size()) != dim) throw ConfigError(coef.field("mu_slope"), "vectors need one entry per axis");
                    mu_slope[i] = to_point(v);
                }
            }
            if (const json* js = coef.take("a_slope")) {
                if (!js->is_array() || static_cast<int>(js->size()) != dim) {
                    throw ConfigError(coef.field("a_slope"), "one matrix per axis");
                }
                for (int i = 0; i < dim; ++i) {
                    a_slope[i] = parse_matrix(&(*js)[i], coef.field("a_slope") + "[" + std::to_string(i) + "]", dim,
                                              SmallMatrix::Zero(dim, dim));
                }
            }
            if (!coef.has("lambda")) throw ConfigError(coef.field("lambda"), "affine coefficients need an explicit lambda");
            const double lambda = coef.number("lambda", 0.0);
            s.coefficients =
                std::make_shared<CoefficientModel>(CoefficientModel::affine(mu0, mu_slope, a0, a_slope, lambda));
        }
    } catch (const PreconditionError& e) {
        throw ConfigError("coefficients", e.what());
    }
    coef.finish();
    if (!(s.coefficients->lambda_min() > 0.0)) throw ConfigError("coefficients.lambda", "must be > 0");

    // solver
    Block solver = root.sub("solver");
    s.generator.theta = solver.number("theta", 0.5);
    if (s.generator.theta < 0.5 || s.generator.theta > 1.0) throw ConfigError(solver.field("theta"), "must lie in [0.5, 1]");
    s.generator.stencil = solver.choice("stencil", "central", {"central", "upwind"}) == "upwind" ? Stencil::Upwind
                                                                                                  : Stencil::Central;
    s.generator.auto_upwind = solver.boolean("auto_upwind", true);
    s.cg.tol = solver.number("cg_tol", 1e-10);
    s.cg.max_iters = static_cast<int>(solver.integer("cg_max_iters", 500));
    s.inner.tol = solver.number("inner_tol", 1e-13);
    s.inner.max_iters = static_cast<int>(solver.integer("inner_max_iters", 500));
    s.dual.tol = solver.number("dual_tol", 1e-6);
    s.dual.max_iters = static_cast<int>(solver.integer("max_iters", 20000));
    s.dual.power_iters = static_cast<int>(solver.integer("power_iters", 30));
    s.dual.step_rule = solver.choice("step_rule", "power", {"power", "backtracking"}) == "power"
                           ? StepRule::PowerIteration
                           : StepRule::Backtracking;
    solver.finish();
    if (!(s.cg.tol > 0.0) || !(s.inner.tol > 0.0) || !(s.dual.tol > 0.0)) {
        throw ConfigError("solver", "tolerances must be > 0");
    }
    if (s.cg.max_iters < 1 || s.inner.max_iters < 1 || s.dual.max_iters < 1 || s.dual.power_iters < 1) {
        throw ConfigError("solver", "iteration limits must be >= 1");
    }

    // ellipticity on every sample time the schemes will touch
    try {
        s.coefficients->check_ellipticity(s.grids, s.generator.theta);
    } catch (const PreconditionError& e) {
        throw ConfigError("coefficients", e.what());
    }

    // subdomains
    Block sub = root.sub("subdomains");
    {
        const json* j1 = sub.take("U1");
        const json* j2 = sub.take("U2");
        s.u1_box = j1 ? parse_box(*j1, sub.field("U1"), dim) : std::vector<Interval>{{0.1, 0.4}};
        s.u2_box = j2 ? parse_box(*j2, sub.field("U2"), dim) : std::vector<Interval>{{0.6, 0.9}};
        if (dim == 2 && (!j1 || !j2)) throw ConfigError("subdomains", "2D scenarios must give both U1 and U2 boxes");
    }
    sub.finish();
    s.u1_mask = mask_from_box(space, s.u1_box, SubdomainLabel::U1);
    s.u2_mask = mask_from_box(space, s.u2_box, SubdomainLabel::U2);
    if (!disjoint(s.u1_mask, s.u2_mask)) {
        throw ConfigError("subdomains", "U1 box " + describe(s.u1_box) + " and U2 box " + describe(s.u2_box) +
                                            " overlap on grid nodes");
    }
    if (s.u1_mask.count() == 0) throw ConfigError("subdomains.U1", "box " + describe(s.u1_box) + " contains no grid node");
    if (s.u2_mask.count() == 0) throw ConfigError("subdomains.U2", "box " + describe(s.u2_box) + " contains no grid node");

    // follower
    Block fol = root.sub("follower");
    s.beta = fol.number("beta", 1.0);
    if (!(s.beta > 0.0)) throw ConfigError(fol.field("beta"), "must be > 0");
    s.y_rf = parse_trajectory(fol.sub("y_rf"), s.grids, "t_sin");
    s.u1 = parse_trajectory(fol.sub("u1"), s.grids, "zero");
    fol.finish();

    // leader
    Block lead = root.sub("leader");
    s.alpha = lead.number("alpha", 0.5);
    if (!(s.alpha > 0.0)) throw ConfigError(lead.field("alpha"), "must be > 0");
    s.alpha_relative = lead.choice("alpha_mode", "relative", {"relative", "absolute"}) == "relative";
    s.y_tg = parse_target(lead.sub("y_tg"), s.grids);
    s.sweep = lead.numbers("sweep", {0.2, 0.1, 0.05});
    lead.finish();
    for (std::size_t i = 0; i < s.sweep.size(); ++i) {
        if (!(s.sweep[i] > 0.0)) throw ConfigError("leader.sweep", "values must be > 0");
        if (i > 0 && !(s.sweep[i] < s.sweep[i - 1])) {
            throw ConfigError("leader.sweep", "values must be strictly decreasing (duplicates are rejected)");
        }
    }

    // uncertainty
    Block unc = root.sub("uncertainty");
    const std::string hk = unc.choice("kind", "unit", {"none", "unit", "analytic", "numeric"});
    if (hk == "none") {
        s.hkind.reset();
    } else if (hk == "unit") {
        s.hkind = UnitH{};
    } else if (hk == "analytic") {
        s.hkind = AnalyticH{parse_vector(unc, "c", dim, 1.0)};
        if (!s.coefficients->is_constant()) throw ConfigError(unc.field("kind"), "analytic h requires constant coefficients");
    } else {
        Block term = unc.sub("terminal");
        const std::string preset = term.choice("preset", "one_plus_sin", {"one_plus_sin", "custom"});
        SpaceField g(space.size());
        if (preset == "custom") {
            g = custom_space(term, s.grids);
        } else {
            const double amp = term.number("amplitude", 0.5);
            for (int n = 0; n < space.size(); ++n) g[n] = 1.0 + amp * sine_mode(space, n);
        }
        term.finish();
        for (int n = 0; n < g.size(); ++n) {
            if (!(g[n] > 0.0)) throw ConfigError(unc.field("terminal"), "terminal h data must be strictly positive");
        }
        s.hkind = NumericH{g};
    }
    unc.finish();

    // sde
    Block sde = root.sub("sde");
    const long n_paths = sde.integer("n_paths", 100000);
    if (n_paths < 1 || n_paths > 100000000) throw ConfigError(sde.field("n_paths"), "must be in [1, 1e8]");
    s.sde.n_paths = static_cast<int>(n_paths);
    s.sde.seed = sde.unsigned_integer("seed", 20240601);
    std::vector<double> centre;
    for (int axis = 0; axis < dim; ++axis) centre.push_back(0.5 * (bounds[axis].lo + bounds[axis].hi));
    const auto x0 = sde.numbers("x0", centre);
    if (static_cast<int>(x0.size()) != dim) throw ConfigError(sde.field("x0"), "one coordinate per axis");
    s.sde.x0 = to_point(x0);
    for (int axis = 0; axis < dim; ++axis) {
        if (!(x0[axis] > bounds[axis].lo && x0[axis] < bounds[axis].hi)) {
            throw ConfigError(sde.field("x0"), "start point must be inside the domain");
        }
    }
    s.sde.t_check = sde.number("t_check", T);
    if (s.sde.t_check < 0.0 || s.sde.t_check > T) throw ConfigError(sde.field("t_check"), "must lie in [0, T]");
    {
        const double steps = s.sde.t_check / s.grids.time.dt();
        if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
            throw ConfigError(sde.field("t_check"), "must be a multiple of dt");
        }
    }
    s.sde.C = sde.number("C", 1.0);
    if (s.sde.C < 0.0) throw ConfigError(sde.field("C"), "must be >= 0");
    const std::string absorb = sde.choice("absorption", "bridge", {"bridge", "first_crossing"});
    s.sde.absorption = absorb == "bridge" ? Absorption::Bridge : Absorption::FirstCrossing;
    sde.finish();

    root.string("name", "");  // free-form label
    root.finish();
    return s;
}

Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open scenario file " + path);
    json doc;
    try {
        doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("", path + ": " + e.what());
    }
    for (const auto& o : overrides) apply_override(doc, o);
    return parse_scenario(doc);
}

Pipeline build_pipeline(const Scenario& s) {
    Pipeline p;
    p.nominal = std::make_shared<const ThetaScheme>(assemble_generator(s.grids, s.coefficients, s.generator));
    p.follower.beta = s.beta;
    p.follower.y_rf = s.y_rf;
    p.follower.u1_mask = s.u1_mask;
    p.follower.u2_mask = s.u2_mask;
    p.follower.model = p.nominal;
    p.follower.cg = s.cg;
    validate(p.follower);
    if (s.hkind) p.hmodel = make_h(*s.hkind, s.grids, *s.coefficients);
    return p;
}

LeaderProblem build_leader(const Scenario& s, const Pipeline& p) {
    return make_leader_problem(s.alpha_relative ? 1.0 : s.alpha, s.y_tg, p.follower, p.hmodel, s.inner);
}

double resolve_alpha(const Scenario& s, double alpha, const LeaderProblem& problem, const BasePair& base) {
    if (!s.alpha_relative) return alpha;
    const double gap = l2_norm(problem.grids().space, problem.y_tg - base.y0_terminal());
    if (!(gap > 0.0)) throw ConfigError("leader.alpha", "relative alpha needs y_tg != y0(T)");
    return alpha * gap;
}

}  // namespace hctl

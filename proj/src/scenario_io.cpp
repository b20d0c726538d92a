#include "elte/scenario_io.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace elte {

namespace {

using nlohmann::json;

// Strict view of one JSON object: every key must be consumed before finish().
class Fields {
public:
    Fields(const json& j, std::string where) : j_(j), where_(std::move(where))
    {
        if (!j_.is_object()) {
            fail("expected an object");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key)
    {
        used_.insert(key);
        return j_.at(key);
    }

    std::string name(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

    [[noreturn]] void fail(const std::string& msg, const std::string& key = {}) const
    {
        const std::string at = key.empty() ? where_ : name(key);
        throw ConfigError((at.empty() ? std::string() : at + ": ") + msg);
    }

    double number(const std::string& key, double fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = raw(key);
        if (!v.is_number()) {
            fail("expected a number", key);
        }
        return v.get<double>();
    }

    long long integer(const std::string& key, long long fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = raw(key);
        if (!v.is_number_integer()) {
            fail("expected an integer", key);
        }
        return v.get<long long>();
    }

    std::string text(const std::string& key, const std::string& fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = raw(key);
        if (!v.is_string()) {
            fail("expected a string", key);
        }
        return v.get<std::string>();
    }

    Eigen::VectorXd vector(const std::string& key)
    {
        if (!has(key)) {
            fail("missing", key);
        }
        const auto& v = raw(key);
        if (!v.is_array() || v.empty()) {
            fail("expected a non-empty array of numbers", key);
        }
        Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) {
                fail("expected a non-empty array of numbers", key);
            }
            out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
        }
        return out;
    }

    void finish() const
    {
        for (const auto& item : j_.items()) {
            if (!used_.count(item.key())) {
                fail("unknown key", item.key());
            }
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> used_;
};

PeriodicMotion read_periodic(Fields& f, PeriodicMotion m)
{
    m.pitch_deg = f.number("pitch_deg", m.pitch_deg);
    m.pitch_hz = f.number("pitch_hz", m.pitch_hz);
    m.sway_m = f.number("sway_m", m.sway_m);
    m.sway_hz = f.number("sway_hz", m.sway_hz);
    m.lever_arm = f.number("lever_arm", m.lever_arm);
    m.sway_transmission = f.number("sway_transmission", m.sway_transmission);
    m.phase = f.number("phase", m.phase);
    return m;
}

PeriodicMotion preset(Fields& f, const std::string& key)
{
    const auto name = f.text(key, "");
    if (name.empty()) {
        return {};
    }
    if (name == "light") {
        return light_motion();
    }
    if (name == "heavy") {
        return heavy_motion();
    }
    f.fail("unknown preset '" + name + "' (light, heavy)", key);
}

TargetMotion read_motion(const json& j, const std::string& where)
{
    Fields f(j, where);
    const auto type = f.text("type", "static");
    TargetMotion motion;
    if (type == "static") {
        motion = StaticMotion{};
    } else if (type == "step") {
        StepMotion m;
        m.tick = f.integer("tick", 0);
        m.offset = f.vector("offset");
        motion = m;
    } else if (type == "drift") {
        motion = DriftMotion{f.vector("velocity")};
    } else if (type == "periodic") {
        auto base = preset(f, "preset");
        motion = read_periodic(f, base);
    } else {
        f.fail("unknown type '" + type + "' (static, step, drift, periodic)", "type");
    }
    f.finish();
    return motion;
}

Burst read_burst(const json& j, const std::string& where)
{
    Fields f(j, where);
    Burst b;
    b.start = f.integer("start", 0);
    b.stop = f.integer("stop", 0);
    if (f.has("motion")) {
        Fields m(f.raw("motion"), f.name("motion"));
        b.motion = read_periodic(m, preset(m, "preset"));
        m.finish();
    }
    f.finish();
    return b;
}

PointConstraint read_constraint(const json& j, const std::string& where)
{
    Fields f(j, where);
    PointConstraint c;
    const auto index = f.integer("index", -1);
    if (index < 0) {
        f.fail("missing or negative", "index");
    }
    c.index = index;
    c.center = f.vector("center");
    c.radius = f.number("radius", 0.0);
    const auto kind = f.text("kind", "attract");
    if (kind == "attract") {
        c.kind = ConstraintKind::Attract;
    } else if (kind == "repel") {
        c.kind = ConstraintKind::Repel;
    } else {
        f.fail("expected attract or repel", "kind");
    }
    f.finish();
    return c;
}

void read_pipeline(const json& j, const std::string& where, PipelineConfig& p)
{
    Fields f(j, where);
    p.initial_radius = f.number("initial_radius", p.initial_radius);
    p.final_radius = f.number("final_radius", p.final_radius);
    p.replan_threshold = f.number("replan_threshold", p.replan_threshold);
    p.max_infeasible_ticks = static_cast<int>(f.integer("max_infeasible_ticks", p.max_infeasible_ticks));
    if (f.has("standoff")) {
        p.standoff = f.vector("standoff");
    }
    if (f.has("weights")) {
        Fields w(f.raw("weights"), f.name("weights"));
        p.weights.stretch = w.number("stretch", p.weights.stretch);
        p.weights.bend = w.number("bend", p.weights.bend);
        w.finish();
    }
    if (f.has("constraints")) {
        const auto& list = f.raw("constraints");
        if (!list.is_array()) {
            f.fail("expected an array", "constraints");
        }
        for (std::size_t i = 0; i < list.size(); ++i) {
            p.constraints.push_back(read_constraint(list[i], f.name("constraints") + "[" + std::to_string(i) + "]"));
        }
    }
    if (f.has("ukf")) {
        Fields u(f.raw("ukf"), f.name("ukf"));
        p.ukf.alpha = u.number("alpha", p.ukf.alpha);
        p.ukf.beta = u.number("beta", p.ukf.beta);
        p.ukf.kappa = u.number("kappa", p.ukf.kappa);
        p.ukf.q = u.number("q", p.ukf.q);
        p.ukf.r_obs = u.number("r_obs", p.ukf.r_obs);
        u.finish();
    }
    if (f.has("dmp")) {
        Fields d(f.raw("dmp"), f.name("dmp"));
        p.dmp.n_basis = d.integer("n_basis", p.dmp.n_basis);
        p.dmp.stiffness = d.number("stiffness", p.dmp.stiffness);
        p.dmp.alpha = d.number("alpha", p.dmp.alpha);
        d.finish();
    }
    f.finish();
}

json parse_json(const std::string& text, const std::string& origin)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

std::string slurp(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void check_dimensions(const ScenarioConfig& sc)
{
    Trajectory demo = [&] {
        try {
            return load_demo(sc);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("demo: ") + e.what());
        }
    }();
    const Eigen::Index d = demo.dims();
    auto need = [&](const Eigen::VectorXd& v, const std::string& field) {
        if (v.size() != d) {
            throw ConfigError(field + ": expected " + std::to_string(d) + " components to match the demonstration");
        }
    };
    if (const auto* m = std::get_if<StepMotion>(&sc.motion)) {
        need(m->offset, "motion.offset");
    }
    if (const auto* m = std::get_if<DriftMotion>(&sc.motion)) {
        need(m->velocity, "motion.velocity");
    }
    if (sc.pipeline.standoff.size() != 0) {
        need(sc.pipeline.standoff, "pipeline.standoff");
    }
    for (std::size_t i = 0; i < sc.pipeline.constraints.size(); ++i) {
        const auto& c = sc.pipeline.constraints[i];
        const std::string field = "pipeline.constraints[" + std::to_string(i) + "]";
        need(c.center, field + ".center");
        if (c.index >= demo.size()) {
            throw ConfigError(field + ".index: beyond the last node");
        }
    }
}

} // namespace

Method parse_method(const std::string& name)
{
    if (name == "elte") {
        return Method::Elte;
    }
    if (name == "dmp") {
        return Method::Dmp;
    }
    throw ConfigError("unknown method '" + name + "' (elte, dmp)");
}

ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir,
                              const std::string& origin)
{
    const json j = parse_json(text, origin);
    ScenarioConfig sc;
    try {
        Fields f(j, "");
        sc.id = f.text("id", sc.id);
        if (f.has("demo")) {
            Fields d(f.raw("demo"), "demo");
            if (d.has("shape") == d.has("csv")) {
                d.fail("give exactly one of shape or csv");
            }
            if (d.has("shape")) {
                const auto name = d.text("shape", "");
                sc.demo.shape = parse_shape(name);
                if (!sc.demo.shape) {
                    d.fail("unknown shape '" + name + "' (s_curve, square_corner)", "shape");
                }
            } else {
                sc.demo.shape.reset();
                std::filesystem::path csv = d.text("csv", "");
                sc.demo.csv = csv.is_relative() ? base_dir / csv : csv;
            }
            sc.demo.nodes = d.integer("nodes", sc.demo.nodes);
            d.finish();
        }
        if (f.has("motion")) {
            sc.motion = read_motion(f.raw("motion"), "motion");
        }
        if (f.has("burst")) {
            sc.burst = read_burst(f.raw("burst"), "burst");
        }
        sc.noise_std = f.number("noise_std", sc.noise_std);
        sc.dropout_prob = f.number("dropout_prob", sc.dropout_prob);
        sc.duration_ticks = f.integer("duration_ticks", sc.duration_ticks);
        sc.dt = f.number("dt", sc.dt);
        const auto seed = f.integer("seed", 0);
        if (seed < 0) {
            f.fail("must be non-negative", "seed");
        }
        sc.seed = static_cast<std::uint64_t>(seed);
        sc.success_threshold = f.number("success_threshold", sc.success_threshold);
        if (f.has("pipeline")) {
            read_pipeline(f.raw("pipeline"), "pipeline", sc.pipeline);
        }
        f.finish();
        validate(sc);
        check_dimensions(sc);
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return sc;
}

ScenarioConfig load_scenario(const std::filesystem::path& path)
{
    return parse_scenario(slurp(path), path.parent_path(), path.string());
}

SweepPlan parse_sweep(const std::string& text, const std::filesystem::path& base_dir, const std::string& origin)
{
    const json j = parse_json(text, origin);
    SweepPlan plan;
    try {
        Fields f(j, "");
        if (!f.has("regimes") || !f.raw("regimes").is_array() || f.raw("regimes").empty()) {
            f.fail("expected a non-empty array", "regimes");
        }
        const auto& regimes = f.raw("regimes");
        for (std::size_t i = 0; i < regimes.size(); ++i) {
            Fields r(regimes[i], "regimes[" + std::to_string(i) + "]");
            SweepRegime reg;
            reg.name = r.text("name", "");
            if (reg.name.empty()) {
                r.fail("missing", "name");
            }
            std::filesystem::path file = r.text("scenario", "");
            if (file.empty()) {
                r.fail("missing", "scenario");
            }
            r.finish();
            reg.scenario = load_scenario(file.is_relative() ? base_dir / file : file);
            plan.regimes.push_back(std::move(reg));
        }
        if (f.has("methods")) {
            const auto& m = f.raw("methods");
            if (!m.is_array() || m.empty()) {
                f.fail("expected a non-empty array", "methods");
            }
            for (const auto& v : m) {
                if (!v.is_string()) {
                    f.fail("expected method names", "methods");
                }
                plan.methods.push_back(parse_method(v.get<std::string>()));
            }
        } else {
            plan.methods = {Method::Elte, Method::Dmp};
        }
        if (f.has("seeds")) {
            const auto& s = f.raw("seeds");
            if (!s.is_array() || s.empty()) {
                f.fail("expected a non-empty array", "seeds");
            }
            for (const auto& v : s) {
                if (!v.is_number_unsigned()) {
                    f.fail("expected non-negative integers", "seeds");
                }
                plan.seeds.push_back(v.get<std::uint64_t>());
            }
        } else {
            plan.seeds = {1, 2, 3};
        }
        f.finish();
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return plan;
}

SweepPlan load_sweep(const std::filesystem::path& path)
{
    return parse_sweep(slurp(path), path.parent_path(), path.string());
}

} // namespace elte

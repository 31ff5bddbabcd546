#include "fsstab/config.hpp"

#include "fsstab/errors.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace fsstab {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Entry {
    std::string value;
    int line;
    bool used = false;
};

using Table = std::map<std::string, Entry>;  // "section.key" -> value

[[noreturn]] void fail(int line, const std::string& msg) {
    std::ostringstream os;
    os << "config line " << line << ": " << msg;
    throw ConfigError(os.str());
}

double to_double(const std::string& key, const Entry& e) {
    try {
        size_t pos = 0;
        const double v = std::stod(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        fail(e.line, "expected a number for '" + key + "', got '" + e.value + "'");
    }
}

long long to_int(const std::string& key, const Entry& e) {
    try {
        size_t pos = 0;
        const long long v = std::stoll(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        fail(e.line, "expected an integer for '" + key + "', got '" + e.value + "'");
    }
}

Table tokenize(const std::string& text) {
    Table table;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(lineno, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) fail(lineno, "empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(lineno, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(lineno, "empty key");
        if (section.empty()) fail(lineno, "key outside of any section");
        const std::string full = section + "." + key;
        if (table.count(full)) fail(lineno, "duplicate key '" + full + "'");
        table[full] = Entry{value, lineno};
    }
    return table;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    Table table = tokenize(text);
    ExperimentConfig cfg;

    auto get = [&](const std::string& key) -> Entry* {
        auto it = table.find(key);
        if (it == table.end()) return nullptr;
        it->second.used = true;
        return &it->second;
    };

    if (Entry* e = get("geometry.container_radius"))
        cfg.geometry.container_radius = to_double("container_radius", *e);
    if (Entry* e = get("geometry.solid_shape")) {
        if (e->value == "disk") cfg.geometry.solid_shape = SolidShape::Disk;
        else if (e->value == "ellipse") cfg.geometry.solid_shape = SolidShape::Ellipse;
        else fail(e->line, "solid_shape must be 'disk' or 'ellipse'");
    }
    if (Entry* e = get("geometry.solid_radius"))
        cfg.geometry.solid_radius = to_double("solid_radius", *e);
    if (Entry* e = get("geometry.semi_axis_x"))
        cfg.geometry.semi_axis_x = to_double("semi_axis_x", *e);
    if (Entry* e = get("geometry.semi_axis_y"))
        cfg.geometry.semi_axis_y = to_double("semi_axis_y", *e);
    if (Entry* e = get("geometry.solid_density"))
        cfg.geometry.solid_density = to_double("solid_density", *e);
    if (Entry* e = get("geometry.viscosity"))
        cfg.geometry.viscosity = to_double("viscosity", *e);
    if (Entry* e = get("geometry.mesh_file")) cfg.mesh_file = e->value;

    Entry* h = get("discretization.mesh_size");
    if (!h) throw ConfigError("missing required field 'discretization.mesh_size'");
    cfg.geometry.mesh_size = to_double("mesh_size", *h);
    if (Entry* e = get("discretization.quality_floor_deg"))
        cfg.geometry.quality_floor_deg = to_double("quality_floor_deg", *e);

    Entry* lam = get("stabilization.lambda");
    Entry* lam_rel = get("stabilization.lambda_relative");
    if (lam && lam_rel)
        fail(lam->line, "give either lambda or lambda_relative, not both");
    if (!lam && !lam_rel)
        throw ConfigError(
            "missing required field 'stabilization.lambda' (or lambda_relative)");
    if (lam) {
        cfg.lambda = to_double("lambda", *lam);
        if (cfg.lambda <= 0.0) fail(lam->line, "lambda must be positive");
    } else {
        cfg.lambda_relative = to_double("lambda_relative", *lam_rel);
        if (cfg.lambda_relative <= 0.0) fail(lam_rel->line, "lambda_relative must be positive");
    }
    if (Entry* e = get("stabilization.modes")) {
        cfg.control_modes = static_cast<int>(to_int("modes", *e));
        if (cfg.control_modes < 1) fail(e->line, "modes must be >= 1");
    }
    if (Entry* e = get("stabilization.eigen_count")) {
        cfg.eigen_count = static_cast<int>(to_int("eigen_count", *e));
        if (cfg.eigen_count < 1) fail(e->line, "eigen_count must be >= 1");
    }

    if (Entry* e = get("simulation.horizon")) {
        cfg.horizon = to_double("horizon", *e);
        if (cfg.horizon < 0.0) fail(e->line, "horizon must be nonnegative");
    }
    if (Entry* e = get("simulation.dt")) {
        cfg.dt = to_double("dt", *e);
        if (cfg.dt < 0.0) fail(e->line, "dt must be nonnegative");
    }
    if (Entry* e = get("simulation.initial")) {
        cfg.initial = e->value;
        if (cfg.initial.rfind("eigenmode:", 0) == 0) {
            const std::string idx = cfg.initial.substr(10);
            if (idx.empty() || idx.find_first_not_of("0123456789") != std::string::npos)
                fail(e->line, "eigenmode index must be a nonnegative integer");
        } else if (cfg.initial != "random") {
            fail(e->line, "initial must be 'random' or 'eigenmode:<index>'");
        }
    }
    if (Entry* e = get("simulation.seed"))
        cfg.seed = static_cast<unsigned long long>(to_int("seed", *e));

    if (Entry* e = get("deformation.snapshots")) {
        cfg.deformation_snapshots = static_cast<int>(to_int("snapshots", *e));
        if (cfg.deformation_snapshots < 2) fail(e->line, "snapshots must be >= 2");
    }

    if (Entry* e = get("output.directory")) cfg.output_directory = e->value;

    for (const auto& [key, entry] : table)
        if (!entry.used) fail(entry.line, "unknown key '" + key + "'");

    // structural validation of the geometry block
    cfg.geometry = build_geometry(cfg.geometry);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    // route through the parser so overrides share the validation logic
    static const std::map<std::string, std::string> sections = {
        {"container_radius", "geometry"}, {"solid_shape", "geometry"},
        {"solid_radius", "geometry"},     {"semi_axis_x", "geometry"},
        {"semi_axis_y", "geometry"},      {"solid_density", "geometry"},
        {"viscosity", "geometry"},        {"mesh_file", "geometry"},
        {"mesh_size", "discretization"},  {"quality_floor_deg", "discretization"},
        {"lambda", "stabilization"},      {"lambda_relative", "stabilization"},
        {"modes", "stabilization"},       {"eigen_count", "stabilization"},
        {"horizon", "simulation"},        {"dt", "simulation"},
        {"initial", "simulation"},        {"seed", "simulation"},
        {"snapshots", "deformation"},     {"directory", "output"},
    };
    std::string full = key;
    if (key.find('.') == std::string::npos) {
        const auto it = sections.find(key);
        if (it == sections.end()) throw ConfigError("unknown override key '" + key + "'");
        full = it->second + "." + key;
    }

    // serialize, replace, reparse
    std::ostringstream os;
    std::string current;
    auto emit = [&](const std::string& k, const std::string& v) {
        const auto dot = k.find('.');
        const std::string section = k.substr(0, dot);
        if (section != current) {
            os << "[" << section << "]\n";
            current = section;
        }
        os << k.substr(dot + 1) << " = " << v << "\n";
    };

    std::map<std::string, std::string> flat;
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    flat["geometry.container_radius"] = num(cfg.geometry.container_radius);
    flat["geometry.solid_shape"] =
        cfg.geometry.solid_shape == SolidShape::Disk ? "disk" : "ellipse";
    flat["geometry.solid_radius"] = num(cfg.geometry.solid_radius);
    flat["geometry.semi_axis_x"] = num(cfg.geometry.semi_axis_x);
    flat["geometry.semi_axis_y"] = num(cfg.geometry.semi_axis_y);
    flat["geometry.solid_density"] = num(cfg.geometry.solid_density);
    flat["geometry.viscosity"] = num(cfg.geometry.viscosity);
    if (cfg.mesh_file) flat["geometry.mesh_file"] = *cfg.mesh_file;
    flat["discretization.mesh_size"] = num(cfg.geometry.mesh_size);
    flat["discretization.quality_floor_deg"] = num(cfg.geometry.quality_floor_deg);
    if (cfg.lambda > 0.0) flat["stabilization.lambda"] = num(cfg.lambda);
    if (cfg.lambda_relative > 0.0)
        flat["stabilization.lambda_relative"] = num(cfg.lambda_relative);
    flat["stabilization.modes"] = std::to_string(cfg.control_modes);
    flat["stabilization.eigen_count"] = std::to_string(cfg.eigen_count);
    flat["simulation.horizon"] = num(cfg.horizon);
    flat["simulation.dt"] = num(cfg.dt);
    flat["simulation.initial"] = cfg.initial;
    flat["simulation.seed"] = std::to_string(cfg.seed);
    flat["deformation.snapshots"] = std::to_string(cfg.deformation_snapshots);
    flat["output.directory"] = cfg.output_directory;

    if (full == "stabilization.lambda") flat.erase("stabilization.lambda_relative");
    if (full == "stabilization.lambda_relative") flat.erase("stabilization.lambda");
    flat[full] = value;
    for (const auto& [k, v] : flat) emit(k, v);
    cfg = parse_config_text(os.str());
}

}  // namespace fsstab

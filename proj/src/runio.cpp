#include "merodim/runio.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace merodim {

std::string Config::get(const std::string& key, const std::string& fallback) const {
    const auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw Error("ConfigError", "key " + key + " is not a number: " + it->second);
    }
}

long Config::get_long(const std::string& key, long fallback) const {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stol(it->second);
    } catch (const std::exception&) {
        throw Error("ConfigError", "key " + key + " is not an integer: " + it->second);
    }
}

Config load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("ConfigError", "cannot open config file " + path);
    Config cfg;
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) cfg.kv[key] = val;
    }
    return cfg;
}

Complex parse_complex(const std::string& text) {
    std::string s = text;
    s.erase(std::remove(s.begin(), s.end(), ' '), s.end());
    if (s.empty()) throw Error("ConfigError", "empty complex literal");
    if (s.back() != 'i' && s.back() != 'I') return Complex(std::stod(s), 0.0);
    s.pop_back();
    // Split at the last +/- that is not an exponent sign and not leading.
    for (std::size_t pos = s.size(); pos-- > 1;) {
        const char c = s[pos];
        if ((c == '+' || c == '-') && s[pos - 1] != 'e' && s[pos - 1] != 'E') {
            const std::string re = s.substr(0, pos);
            std::string im = s.substr(pos);
            if (im == "+") im = "1";
            if (im == "-") im = "-1";
            return Complex(std::stod(re), std::stod(im));
        }
    }
    if (s.empty() || s == "+") return Complex(0.0, 1.0);
    if (s == "-") return Complex(0.0, -1.0);
    return Complex(0.0, std::stod(s));
}

std::string format_complex(const Complex& z) {
    char buf[80];
    std::snprintf(buf, sizeof buf, "%.17g%+.17gi", z.real(), z.imag());
    return buf;
}

MapSpec map_from_config(const Config& cfg) {
    const std::string family = cfg.get("family", "tan");
    if (family == "tan" || family == "tangent") {
        Complex lambda;
        if (cfg.has("lambda")) {
            lambda = parse_complex(cfg.get("lambda"));
        } else {
            lambda = Complex(cfg.get_double("lambda_re", 1.0), cfg.get_double("lambda_im", 0.0));
        }
        return MapSpec::tangent(lambda);
    }
    if (family == "mobius_exp") {
        const auto coef = [&](const std::string& name) {
            if (cfg.has(name)) return parse_complex(cfg.get(name));
            return Complex(cfg.get_double(name + "_re", 0.0), cfg.get_double(name + "_im", 0.0));
        };
        return MapSpec::mobius_exp(coef("a"), coef("b"), coef("c"), coef("d"));
    }
    throw Error("ConfigError", "unknown family: " + family);
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string tool_version() { return "merodim 1.0.0"; }

std::string Manifest::hash() const {
    Json identity;
    identity["command"] = command;
    identity["config"] = config_echo;
    identity["seed"] = master_seed;
    identity["version"] = version;
    return fnv1a_hex(identity.dump());
}

Json Manifest::to_json() const {
    Json j;
    j["command"] = command;
    j["config"] = config_echo;
    j["seed"] = master_seed;
    j["version"] = version;
    j["wall_time_s"] = wall_time_s;
    j["regime"] = regime_summary;
    j["hash"] = hash();
    return j;
}

void Manifest::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("IoError", "cannot open " + path + " for writing");
    os << to_json().dump(2) << "\n";
}

JsonlWriter::JsonlWriter(const std::string& path, std::string manifest_hash)
    : os_(path), hash_(std::move(manifest_hash)) {
    if (!os_) throw Error("IoError", "cannot open " + path + " for writing");
}

void JsonlWriter::write(Json record) {
    record["manifest"] = hash_;
    os_ << record.dump() << "\n";
    os_.flush();
}

Json regime_to_json(const RegimeReport& rep) {
    Json j;
    switch (rep.regime) {
        case Regime::Hyperbolic: j["regime"] = "Hyperbolic"; break;
        case Regime::SubExpanding: j["regime"] = "SubExpanding"; break;
        default: j["regime"] = "Unsupported"; break;
    }
    j["safety_radius_T"] = rep.safety_radius;
    j["expansion_power"] = rep.expansion_power;
    j["expansion_min"] = rep.expansion_min;
    j["fatou_nonempty"] = rep.fatou_nonempty;
    j["note"] = rep.note;
    Json orbits = Json::array();
    for (const auto& orbit : rep.singular_orbits) {
        Json o = Json::array();
        const std::size_t keep = std::min<std::size_t>(orbit.size(), 12);
        for (std::size_t i = 0; i < keep; ++i) o.push_back(format_complex(orbit[i]));
        orbits.push_back(o);
    }
    j["singular_orbit_prefixes"] = orbits;
    Json prefix = Json::array();
    for (const Complex& p : rep.postsingular_prefix) prefix.push_back(format_complex(p));
    j["postsingular_prefix"] = prefix;
    Json cycle = Json::array();
    for (const Complex& p : rep.attracting_cycle) cycle.push_back(format_complex(p));
    j["attracting_cycle"] = cycle;
    return j;
}

}  // namespace merodim

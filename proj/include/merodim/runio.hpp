#pragma once

#include "merodim/map_family.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace merodim {

using Json = nlohmann::ordered_json;

/// Flat key=value configuration; command-line overrides win.
struct Config {
    std::map<std::string, std::string> kv;

    bool has(const std::string& key) const { return kv.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback = "") const;
    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key, long fallback) const;
    void set(const std::string& key, const std::string& value) { kv[key] = value; }
};

Config load_config(const std::string& path);

/// "a+bi" / "a-bi" / "a" / "bi" with round-trip precision.
Complex parse_complex(const std::string& text);
std::string format_complex(const Complex& z);

/// Family instance from config keys: family (tan | mobius_exp), lambda or
/// lambda_re/lambda_im, or the a/b/c/d coefficient pairs.
MapSpec map_from_config(const Config& cfg);

struct Manifest {
    std::string command;
    std::map<std::string, std::string> config_echo;
    std::uint64_t master_seed = 0;
    std::string version;
    double wall_time_s = 0.0;
    std::string regime_summary;

    /// Hash of the deterministic run identity (command, config, seed,
    /// version); wall time stays out so records are reproducible.
    std::string hash() const;
    Json to_json() const;
    void save(const std::string& path) const;
};

/// JSON-lines sink; every record is stamped with the manifest hash.
class JsonlWriter {
public:
    JsonlWriter(const std::string& path, std::string manifest_hash);
    void write(Json record);

private:
    std::ofstream os_;
    std::string hash_;
};

std::string tool_version();

/// FNV-1a 64-bit hex digest.
std::string fnv1a_hex(const std::string& bytes);

Json regime_to_json(const RegimeReport& rep);

}  // namespace merodim

#pragma once

// Stimulus bank file (JSON) and the render manifest. Schemas are documented
// in docs/formats.md.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "timbre/synth.hpp"

namespace timbre {

struct StimulusBank {
    int version = 1;
    std::vector<Patch> patches;

    std::vector<std::string> ids() const;
};

nlohmann::json to_json(const AdsrEnvelope& env);
nlohmann::json to_json(const Patch& patch);
nlohmann::json to_json(const StimulusBank& bank);

AdsrEnvelope envelope_from_json(const nlohmann::json& j);
Patch patch_from_json(const nlohmann::json& j);
// Validates every patch and rejects duplicate ids (ConfigError).
StimulusBank bank_from_json(const nlohmann::json& j);

StimulusBank load_bank(const std::filesystem::path& path);

struct ManifestEntry {
    std::string id;
    std::string file;
    double a_weighted_rms = 0.0;
    double clip_deviation_db = 0.0;
};

// Renders every patch to <dir>/<id>.wav and writes <dir>/manifest.json.
std::vector<ManifestEntry> render_bank(const StimulusBank& bank, const std::filesystem::path& dir,
                                       const nlohmann::json& stamp = nlohmann::json::object());

// Stimulus ids and wav paths in manifest order.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);

}  // namespace timbre

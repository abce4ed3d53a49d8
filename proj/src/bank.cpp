#include "timbre/bank.hpp"

#include <chrono>
#include <fstream>
#include <set>

#include "timbre/errors.hpp"
#include "timbre/wav.hpp"

namespace timbre {

using nlohmann::json;

std::vector<std::string> StimulusBank::ids() const {
    std::vector<std::string> out;
    out.reserve(patches.size());
    for (const auto& p : patches) {
        out.push_back(p.id);
    }
    return out;
}

json to_json(const AdsrEnvelope& env) {
    return {{"attack_s", env.attack_s},
            {"decay_s", env.decay_s},
            {"sustain_level", env.sustain_level},
            {"release_s", env.release_s}};
}

json to_json(const Patch& patch) {
    json osc = {{"waveform", patch.oscillator.waveform == Waveform::pulse ? "pulse" : "sawtooth"}};
    if (patch.oscillator.waveform == Waveform::pulse) {
        osc["duty"] = patch.oscillator.duty;
    }
    json fm = nullptr;
    if (patch.fm) {
        fm = {{"ratio", patch.fm->ratio}, {"index", patch.fm->index}};
    }
    return {{"id", patch.id},
            {"oscillator", osc},
            {"f0_hz", patch.f0_hz},
            {"fm", fm},
            {"filter",
             {{"cutoff_floor_hz", patch.filter.cutoff_floor_hz},
              {"cutoff_peak_hz", patch.filter.cutoff_peak_hz},
              {"resonance_q", patch.filter.resonance_q},
              {"envelope", to_json(patch.filter.envelope)}}},
            {"gain_envelope", to_json(patch.gain_envelope)},
            {"duration_ms", patch.duration_ms}};
}

json to_json(const StimulusBank& bank) {
    json patches = json::array();
    for (const auto& p : bank.patches) {
        patches.push_back(to_json(p));
    }
    return {{"format", "timbre-bank"}, {"version", bank.version}, {"patches", patches}};
}

AdsrEnvelope envelope_from_json(const json& j) {
    AdsrEnvelope env;
    env.attack_s = j.at("attack_s").get<double>();
    env.decay_s = j.at("decay_s").get<double>();
    env.sustain_level = j.at("sustain_level").get<double>();
    env.release_s = j.at("release_s").get<double>();
    return env;
}

Patch patch_from_json(const json& j) {
    try {
        Patch p;
        p.id = j.at("id").get<std::string>();
        const auto& osc = j.at("oscillator");
        const auto waveform = osc.at("waveform").get<std::string>();
        if (waveform == "pulse") {
            p.oscillator.waveform = Waveform::pulse;
            p.oscillator.duty = osc.value("duty", 0.5);
        } else if (waveform == "sawtooth") {
            p.oscillator.waveform = Waveform::sawtooth;
        } else {
            throw ConfigError("unknown waveform '" + waveform + "'");
        }
        p.f0_hz = j.value("f0_hz", kFundamentalHz);
        if (j.contains("fm") && !j.at("fm").is_null()) {
            const auto& fm = j.at("fm");
            const double ratio = fm.at("ratio").get<double>();
            if (ratio != std::floor(ratio)) {
                throw ConfigError("FM ratio must be an integer");
            }
            p.fm = FmSettings{static_cast<int>(ratio), fm.at("index").get<double>()};
        }
        const auto& filter = j.at("filter");
        p.filter.cutoff_floor_hz = filter.at("cutoff_floor_hz").get<double>();
        p.filter.cutoff_peak_hz = filter.at("cutoff_peak_hz").get<double>();
        p.filter.resonance_q = filter.at("resonance_q").get<double>();
        p.filter.envelope = envelope_from_json(filter.at("envelope"));
        p.gain_envelope = envelope_from_json(j.at("gain_envelope"));
        p.duration_ms = j.value("duration_ms", kDurationMs);
        return p;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("patch: ") + e.what());
    }
}

StimulusBank bank_from_json(const json& j) {
    StimulusBank bank;
    try {
        bank.version = j.value("version", 1);
        for (const auto& pj : j.at("patches")) {
            bank.patches.push_back(patch_from_json(pj));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bank: ") + e.what());
    }
    std::set<std::string> seen;
    for (const auto& p : bank.patches) {
        validate(p);
        if (!seen.insert(p.id).second) {
            throw ConfigError("bank: duplicate patch id '" + p.id + "'");
        }
    }
    if (bank.patches.empty()) {
        throw ConfigError("bank: no patches");
    }
    return bank;
}

StimulusBank load_bank(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) {
        throw ConfigError("bank: cannot open " + path.string());
    }
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("bank: ") + e.what(), e.byte);
    }
    return bank_from_json(j);
}

std::vector<ManifestEntry> render_bank(const StimulusBank& bank, const std::filesystem::path& dir,
                                       const json& stamp) {
    std::filesystem::create_directories(dir);
    std::vector<ManifestEntry> entries;
    json stimuli = json::array();
    for (const auto& patch : bank.patches) {
        const RenderedStimulus r = render_patch(patch);
        ManifestEntry e{patch.id, patch.id + ".wav", r.a_weighted_rms, r.clip_deviation_db};
        write_wav(r.audio, dir / e.file);
        stimuli.push_back({{"id", e.id},
                           {"file", e.file},
                           {"parameters", to_json(patch)},
                           {"a_weighted_rms", e.a_weighted_rms},
                           {"a_weighted_rms_dbfs", linear_to_db(e.a_weighted_rms)},
                           {"clip_deviation_db", e.clip_deviation_db}});
        entries.push_back(std::move(e));
    }
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    json manifest = {{"format", "timbre-render-manifest"},
                     {"sample_rate", kSampleRate},
                     {"target_level_dbfs", kTargetLevelDbfs},
                     {"generated_at_unix_ms",
                      std::chrono::duration_cast<std::chrono::milliseconds>(now).count()},
                     {"stimuli", stimuli}};
    for (const auto& [k, v] : stamp.items()) {
        manifest[k] = v;
    }
    std::ofstream f(dir / "manifest.json");
    f << manifest.dump(2) << '\n';
    return entries;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.json");
    if (!f) {
        throw ConfigError("no manifest.json in " + dir.string());
    }
    try {
        const json j = json::parse(f);
        std::vector<ManifestEntry> out;
        for (const auto& s : j.at("stimuli")) {
            out.push_back({s.at("id").get<std::string>(), s.at("file").get<std::string>(),
                           s.value("a_weighted_rms", 0.0), s.value("clip_deviation_db", 0.0)});
        }
        return out;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }
}

}  // namespace timbre

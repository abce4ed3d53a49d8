#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "timbre/synth.hpp"

namespace timbre {

// 16-bit signed PCM, little-endian RIFF/WAVE. Samples are clamped to [-1, 1]
// and quantized as round(x * 32767).
std::int16_t quantize_pcm16(double x);

std::string encode_wav(std::span<const double> interleaved, int channels, long sample_rate);
std::string encode_wav(const AudioBuffer& buffer);

struct DecodedWav {
    int channels = 1;
    long sample_rate = 0;
    std::vector<double> samples;  // interleaved
};

// Any channel count, 16-bit PCM. Throws ParseError with the failing byte offset.
DecodedWav decode_wav_pcm(std::string_view bytes);

// Mono 16-bit PCM only. Throws ParseError with the failing byte offset.
AudioBuffer decode_wav(std::string_view bytes);

void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path);
AudioBuffer read_wav(const std::filesystem::path& path);

}  // namespace timbre

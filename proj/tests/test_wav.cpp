#include <cmath>
#include <cstdint>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "timbre/bank.hpp"
#include "timbre/errors.hpp"
#include "timbre/wav.hpp"

using namespace timbre;

namespace {

std::uint32_t u32_at(const std::string& s, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | static_cast<unsigned char>(s[at + i]);
    }
    return v;
}

std::int16_t s16_at(const std::string& s, std::size_t at) {
    const auto lo = static_cast<unsigned char>(s[at]);
    const auto hi = static_cast<unsigned char>(s[at + 1]);
    return static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
}

}  // namespace

TEST_CASE("quantization extremes") {
    CHECK(quantize_pcm16(1.0) == 32767);
    CHECK(quantize_pcm16(-1.0) == -32767);
    CHECK(quantize_pcm16(0.0) == 0);
    CHECK(quantize_pcm16(3.0) == 32767);
    CHECK(quantize_pcm16(-3.0) == -32767);
    CHECK(quantize_pcm16(0.5) == 16384);
}

TEST_CASE("header layout: 44-byte canonical RIFF, mono 44100") {
    AudioBuffer b{44100, {1.0, -1.0, 0.0}};
    const auto bytes = encode_wav(b);
    REQUIRE(bytes.size() == 44 + 6);
    CHECK(bytes.substr(0, 4) == "RIFF");
    CHECK(u32_at(bytes, 4) == bytes.size() - 8);
    CHECK(bytes.substr(8, 8) == "WAVEfmt ");
    CHECK(u32_at(bytes, 24) == 44100);
    CHECK(u32_at(bytes, 28) == 88200);
    CHECK(bytes.substr(36, 4) == "data");
    CHECK(u32_at(bytes, 40) == 6);
    CHECK(s16_at(bytes, 44) == 32767);
    CHECK(s16_at(bytes, 46) == -32767);
}

TEST_CASE("round trip of a rendered stimulus within 1/32768") {
    const auto bank = testing::study_bank();
    const auto rendered = render_patch(bank.patches.front());
    const auto back = decode_wav(encode_wav(rendered.audio));
    REQUIRE(back.samples.size() == rendered.audio.samples.size());
    CHECK(back.sample_rate == 44100);
    double worst = 0.0;
    for (std::size_t i = 0; i < back.samples.size(); ++i) {
        worst = std::max(worst, std::abs(back.samples[i] - rendered.audio.samples[i]));
    }
    CHECK(worst <= 1.0 / 32768.0);
}

TEST_CASE("round trip property on random buffers") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        AudioBuffer b{44100, std::vector<double>(1 + gen() % 3000)};
        for (double& x : b.samples) {
            x = u(gen);
        }
        const auto back = decode_wav(encode_wav(b));
        REQUIRE(back.samples.size() == b.samples.size());
        for (std::size_t i = 0; i < b.samples.size(); ++i) {
            REQUIRE(std::abs(back.samples[i] - b.samples[i]) <= 1.0 / 32768.0);
        }
    }
}

TEST_CASE("file round trip") {
    testing::TempDir dir("wav");
    AudioBuffer b = testing::sine(440.0, 0.5, 1000);
    write_wav(b, dir.path / "x.wav");
    const auto back = read_wav(dir.path / "x.wav");
    CHECK(back.samples.size() == 1000);
}

TEST_CASE("truncated or malformed files raise ParseError with an offset") {
    const auto bytes = encode_wav(AudioBuffer{44100, std::vector<double>(10, 0.25)});
    for (std::size_t cut : {0ul, 3ul, 11ul, 20ul, 30ul, 43ul, 50ul}) {
        CAPTURE(cut);
        try {
            decode_wav(bytes.substr(0, cut));
            FAIL("no exception");
        } catch (const ParseError& e) {
            CHECK(e.offset() <= cut);
        }
    }
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_wav(bad), ParseError);
    bad = bytes;
    bad[8] = 'X';
    try {
        decode_wav(bad);
        FAIL("no exception");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 8);
    }
    bad = bytes;
    bad[34] = 24;  // bits per sample
    CHECK_THROWS_AS(decode_wav(bad), ParseError);
}

TEST_CASE("stereo decode, mono decoder rejects stereo") {
    const std::vector<double> inter{0.5, -0.5, 0.25, -0.25};
    const auto bytes = encode_wav(inter, 2, 44100);
    const auto d = decode_wav_pcm(bytes);
    CHECK(d.channels == 2);
    CHECK(d.sample_rate == 44100);
    REQUIRE(d.samples.size() == 4);
    CHECK(d.samples[1] == doctest::Approx(-0.5).epsilon(1e-4));
    try {
        decode_wav(bytes);
        FAIL("no exception");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 22);
    }
}

#include "timbre/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "timbre/errors.hpp"

namespace timbre {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw ParseError(std::string("wav: truncated ") + what, pos_);
        }
    }
    std::string_view tag(const char* what) {
        need(4, what);
        auto t = bytes_.substr(pos_, 4);
        pos_ += 4;
        return t;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        const auto v = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes_[pos_]) |
                                                  (static_cast<unsigned char>(bytes_[pos_ + 1]) << 8));
        pos_ += 2;
        return v;
    }
    void skip(std::size_t n, const char* what) {
        need(n, what);
        pos_ += n;
    }
    std::string_view take(std::size_t n, const char* what) {
        need(n, what);
        auto v = bytes_.substr(pos_, n);
        pos_ += n;
        return v;
    }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::int16_t quantize_pcm16(double x) {
    const double clamped = std::clamp(x, -1.0, 1.0);
    return static_cast<std::int16_t>(std::lround(clamped * 32767.0));
}

std::string encode_wav(std::span<const double> interleaved, int channels, long sample_rate) {
    if (channels < 1 || interleaved.size() % static_cast<std::size_t>(channels) != 0) {
        throw ConfigError("encode_wav: sample count must be a multiple of the channel count");
    }
    const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put_u32(out, 36 + data_bytes);
    out += "WAVE";
    out += "fmt ";
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, static_cast<std::uint16_t>(channels));
    put_u32(out, static_cast<std::uint32_t>(sample_rate));
    put_u32(out, static_cast<std::uint32_t>(sample_rate * channels * 2));
    put_u16(out, static_cast<std::uint16_t>(channels * 2));
    put_u16(out, 16);
    out += "data";
    put_u32(out, data_bytes);
    for (double x : interleaved) {
        put_u16(out, static_cast<std::uint16_t>(quantize_pcm16(x)));
    }
    return out;
}

std::string encode_wav(const AudioBuffer& buffer) {
    return encode_wav(buffer.samples, 1, buffer.sample_rate);
}

DecodedWav decode_wav_pcm(std::string_view bytes) {
    Reader r(bytes);
    if (r.tag("RIFF header") != "RIFF") {
        throw ParseError("wav: missing RIFF tag", 0);
    }
    r.u32("RIFF size");
    if (r.tag("WAVE tag") != "WAVE") {
        throw ParseError("wav: missing WAVE tag", 8);
    }

    bool have_fmt = false;
    std::uint16_t channels = 0;
    std::uint16_t bits = 0;
    std::uint32_t rate = 0;
    while (true) {
        const std::size_t chunk_at = r.offset();
        const auto id = r.tag("chunk header");
        const std::uint32_t size = r.u32("chunk size");
        if (id == "fmt ") {
            if (size < 16) {
                throw ParseError("wav: fmt chunk too small", chunk_at);
            }
            const std::size_t fmt_at = r.offset();
            const std::uint16_t format = r.u16("fmt chunk");
            channels = r.u16("fmt chunk");
            rate = r.u32("fmt chunk");
            r.u32("fmt chunk");
            r.u16("fmt chunk");
            bits = r.u16("fmt chunk");
            r.skip(size - 16 + (size % 2), "fmt chunk");
            if (format != 1 || bits != 16) {
                throw ParseError("wav: only 16-bit integer PCM is supported", fmt_at);
            }
            if (channels < 1) {
                throw ParseError("wav: zero channels", fmt_at + 2);
            }
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) {
                throw ParseError("wav: data chunk before fmt chunk", chunk_at);
            }
            if (size % (2u * channels) != 0) {
                throw ParseError("wav: data chunk is not a whole number of frames", chunk_at + 4);
            }
            const auto data = r.take(size, "data chunk");
            DecodedWav out{channels, static_cast<long>(rate), std::vector<double>(size / 2)};
            for (std::size_t i = 0; i < out.samples.size(); ++i) {
                const auto lo = static_cast<unsigned char>(data[2 * i]);
                const auto hi = static_cast<unsigned char>(data[2 * i + 1]);
                const auto s = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
                out.samples[i] = std::max(static_cast<double>(s) / 32767.0, -1.0);
            }
            return out;
        } else {
            r.skip(size + (size % 2), "chunk body");
        }
    }
}

AudioBuffer decode_wav(std::string_view bytes) {
    DecodedWav w = decode_wav_pcm(bytes);
    if (w.channels != 1) {
        throw ParseError("wav: only mono files are supported", 22);
    }
    return {w.sample_rate, std::move(w.samples)};
}

void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("write_wav: cannot open " + path.string());
    }
    const std::string bytes = encode_wav(buffer);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw std::runtime_error("write_wav: write failed for " + path.string());
    }
}

AudioBuffer read_wav(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("read_wav: cannot open " + path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_wav(bytes);
}

}  // namespace timbre

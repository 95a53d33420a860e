#pragma once

// Binary container shared by denoiser and autoencoder checkpoints.
//
//   magic      8 bytes, identifies the payload kind
//   version    u32
//   count      u32, number of entries
//   per entry  u16 name length, name bytes, u32 rank, u64 extent × rank
//   payload    f64 values of every entry, in table order
//   checksum   u64 FNV-1a over all preceding bytes
//
// All integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ldmx/denoisers.hpp"
#include "ldmx/error.hpp"
#include "ldmx/latentae.hpp"
#include "ldmx/numerics.hpp"
#include "ldmx/schedule.hpp"

namespace ldmx::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::string_view kDenoiserMagic = "LDMXTOYD";
inline constexpr std::string_view kAutoencoderMagic = "LDMXTOYA";

struct Entry {
    std::string name;
    Tensor value;
};

namespace detail {

class Writer {
  public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    template <typename U>
    void uint(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
    std::vector<std::uint8_t>& buffer() { return buf_; }

  private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    template <typename U>
    U uint() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
        pos_ += sizeof(U);
        return v;
    }
    double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
    std::size_t position() const { return pos_; }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw FormatError("checkpoint truncated");
    }
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(std::string_view magic, const std::vector<Entry>& entries) {
    if (magic.size() != 8) throw FormatError("checkpoint magic must be 8 bytes");
    detail::Writer w;
    w.bytes(magic);
    w.uint<std::uint32_t>(kFormatVersion);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        if (e.name.size() > 0xFFFF) throw FormatError("entry name too long");
        w.uint<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
        w.bytes(e.name);
        w.uint<std::uint32_t>(static_cast<std::uint32_t>(e.value.shape().size()));
        for (auto d : e.value.shape()) w.uint<std::uint64_t>(d);
    }
    for (const auto& e : entries)
        for (double v : e.value.values()) w.f64(v);
    const auto sum = detail::fnv1a(w.buffer());
    w.uint<std::uint64_t>(sum);
    return std::move(w.buffer());
}

inline std::vector<Entry> decode(std::span<const std::uint8_t> bytes, std::string_view expected_magic) {
    if (bytes.size() < 8 + 4 + 4 + 8) throw FormatError("checkpoint too short");
    const auto body = bytes.first(bytes.size() - 8);
    detail::Reader tail(bytes.subspan(bytes.size() - 8));
    if (tail.uint<std::uint64_t>() != detail::fnv1a(body)) throw FormatError("checkpoint checksum mismatch");

    detail::Reader r(body);
    const auto magic = r.bytes(8);
    if (magic != expected_magic)
        throw FormatError("unexpected checkpoint magic '" + magic + "' (expected '" + std::string(expected_magic) + "')");
    const auto version = r.uint<std::uint32_t>();
    if (version != kFormatVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto count = r.uint<std::uint32_t>();
    std::vector<std::pair<std::string, Shape>> table;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name = r.bytes(r.uint<std::uint16_t>());
        const auto rank = r.uint<std::uint32_t>();
        if (rank == 0 || rank > 8) throw FormatError("bad tensor rank in checkpoint");
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(r.uint<std::uint64_t>());
        table.emplace_back(std::move(name), std::move(shape));
    }
    std::vector<Entry> out;
    for (auto& [name, shape] : table) {
        require_valid_shape(shape);
        std::vector<double> values(shape_size(shape));
        for (auto& v : values) v = r.f64();
        try {
            out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
        } catch (const NumericError&) {
            throw FormatError("non-finite value in checkpoint");
        }
    }
    if (r.position() != body.size()) throw FormatError("trailing bytes in checkpoint");
    return out;
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing '" + path + "'");
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline const Tensor* find(const std::vector<Entry>& entries, std::string_view name) {
    for (const auto& e : entries)
        if (e.name == name) return &e.value;
    return nullptr;
}

inline const Tensor& require(const std::vector<Entry>& entries, std::string_view name) {
    const Tensor* t = find(entries, name);
    if (!t) throw FormatError("checkpoint is missing entry '" + std::string(name) + "'");
    return *t;
}

// ---------------------------------------------------------------------------
// Denoiser bundle

struct ScheduleSpec {
    int steps = ScheduleDefaults::steps;
    double beta_start = ScheduleDefaults::beta_start;
    double beta_end = ScheduleDefaults::beta_end;

    NoiseSchedule build() const { return linear_schedule(steps, beta_start, beta_end); }
};

/// A trained toy denoiser together with what sampling needs to reproduce it.
struct DenoiserBundle {
    ToyDenoiser model;
    std::optional<LabelEncoder> labels;
    ScheduleSpec schedule;
};

inline std::vector<std::uint8_t> encode_denoiser(const DenoiserBundle& b) {
    std::vector<Entry> entries;
    entries.push_back({"schedule", Tensor::vector({static_cast<double>(b.schedule.steps), b.schedule.beta_start,
                                                    b.schedule.beta_end})});
    for (const auto& g : b.model.groups()) {
        auto v = b.model.group(g.name);
        entries.push_back({g.name, Tensor(g.shape, std::vector<double>(v.begin(), v.end()))});
    }
    if (b.labels) entries.push_back({"label_table", b.labels->table()});
    return encode(kDenoiserMagic, entries);
}

inline DenoiserBundle decode_denoiser(std::span<const std::uint8_t> bytes) {
    const auto entries = decode(bytes, kDenoiserMagic);
    const Tensor& sched = require(entries, "schedule");
    if (sched.size() != 3) throw FormatError("schedule entry must hold (T, beta_start, beta_end)");
    ScheduleSpec spec{static_cast<int>(sched[0]), sched[1], sched[2]};

    ToyDenoiserConfig cfg;
    const Tensor& in_w = require(entries, "in_w");
    const Tensor& ff1 = require(entries, "ff1_in_w");
    const Tensor& aq = require(entries, "attn_q");
    const Tensor& ak = require(entries, "attn_k");
    if (in_w.shape().size() != 2 || ff1.shape().size() != 2 || aq.shape().size() != 2 || ak.shape().size() != 2)
        throw FormatError("denoiser weights must be matrices");
    cfg.hidden = in_w.shape()[0];
    cfg.data_width = in_w.shape()[1];
    cfg.ff_width = ff1.shape()[0];
    cfg.attn_width = aq.shape()[0];
    cfg.cond_width = ak.shape()[1];

    ToyDenoiser model(cfg);
    for (const auto& g : model.groups()) {
        const Tensor& t = require(entries, g.name);
        if (t.shape() != g.shape) throw FormatError("shape mismatch for '" + g.name + "'");
        auto dst = model.group(g.name);
        std::copy(t.values().begin(), t.values().end(), dst.begin());
    }
    std::optional<LabelEncoder> labels;
    if (const Tensor* lt = find(entries, "label_table")) labels.emplace(*lt);
    return {std::move(model), std::move(labels), spec};
}

inline void save_denoiser(const std::string& path, const DenoiserBundle& b) { write_file(path, encode_denoiser(b)); }
inline DenoiserBundle load_denoiser(const std::string& path) { return decode_denoiser(read_file(path)); }

// ---------------------------------------------------------------------------
// Autoencoder

inline std::vector<std::uint8_t> encode_autoencoder(const ToyAutoencoderParams& p) {
    return encode(kAutoencoderMagic, {{"enc_w", p.enc_w}, {"enc_b", p.enc_b}, {"dec_w", p.dec_w}, {"dec_b", p.dec_b}});
}

inline ToyAutoencoderParams decode_autoencoder(std::span<const std::uint8_t> bytes) {
    const auto entries = decode(bytes, kAutoencoderMagic);
    ToyAutoencoderParams p{require(entries, "enc_w"), require(entries, "enc_b"), require(entries, "dec_w"),
                           require(entries, "dec_b")};
    try {
        p.validate();
    } catch (const ShapeError& e) {
        throw FormatError(e.what());
    }
    return p;
}

}  // namespace ldmx::checkpoint

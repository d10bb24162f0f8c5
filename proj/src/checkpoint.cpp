// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <system_error>

#include <fmt/format.h>

namespace mrvn {
namespace {

constexpr char kMagic[4] = {'M', 'R', 'V', 'N'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

class Writer {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void doubles(const std::vector<double>& v) {
        u64(v.size());
        raw(v.data(), v.size() * sizeof(double));
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

    void raw(void* p, std::size_t n) {
        if (n > in_.size() - pos_) throw ParseError(fmt::format("checkpoint truncated at byte {}", pos_));
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        raw(&v, sizeof v);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        check_count(n, 1);
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    std::vector<double> doubles() {
        const std::uint64_t n = u64();
        check_count(n, sizeof(double));
        std::vector<double> v(n);
        raw(v.data(), n * sizeof(double));
        return v;
    }
    void check_count(std::uint64_t n, std::size_t elem) const {
        if (n > (in_.size() - pos_) / elem) throw ParseError(fmt::format("checkpoint truncated at byte {}", pos_));
    }
    bool done() const noexcept { return pos_ == in_.size(); }
    std::size_t pos() const noexcept { return pos_; }

private:
    const std::vector<std::uint8_t>& in_;
    std::size_t pos_ = 0;
};

void write_spec(Writer& w, const LayerSpec& s) {
    w.u32(static_cast<std::uint32_t>(s.kind));
    for (std::size_t v : {s.in_features, s.out_features, s.in_channels, s.out_channels, s.kernel, s.stride, s.pool}) {
        w.u32(static_cast<std::uint32_t>(v));
    }
}

LayerSpec read_spec(Reader& r) {
    LayerSpec s;
    const std::uint32_t kind = r.u32();
    if (kind > static_cast<std::uint32_t>(LayerKind::Flatten)) throw ParseError("checkpoint: unknown layer kind");
    s.kind = static_cast<LayerKind>(kind);
    for (std::size_t* f : {&s.in_features, &s.out_features, &s.in_channels, &s.out_channels, &s.kernel, &s.stride,
                           &s.pool}) {
        *f = r.u32();
    }
    return s;
}

void read_tensor_into(Reader& r, Tensor& t, const std::string& what) {
    auto data = r.doubles();
    if (data.size() != t.size()) {
        throw ParseError(fmt::format("checkpoint: {} has {} values, expected {}", what, data.size(), t.size()));
    }
    t.data = std::move(data);
}

int checked_int(std::uint32_t v, const char* what) {
    if (v > 1u << 20) throw ParseError(fmt::format("checkpoint: implausible {} {}", what, v));
    return static_cast<int>(v);
}

}  // namespace

std::vector<std::uint8_t> serialize_state(const TrainingState& st) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kVersion);
    w.u64(st.seed);
    w.u64(st.step);
    w.u32(st.epoch);
    w.u32(st.batch_in_epoch);

    const Shape& in = st.net.input_shape();
    w.u32(static_cast<std::uint32_t>(in.size()));
    for (std::size_t d : in) w.u32(static_cast<std::uint32_t>(d));
    const auto specs = st.net.specs();
    w.u32(static_cast<std::uint32_t>(specs.size()));
    for (const auto& s : specs) write_spec(w, s);

    for (const auto& l : st.net.layers()) {
        if (!l.spec.trainable()) continue;
        w.doubles(l.weight.data);
        w.doubles(l.bias.data);
        w.doubles(l.qweight.data);
        w.doubles(l.qbias.data);
    }

    const auto& q = st.q;
    w.u32(static_cast<std::uint32_t>(q.strategy));
    w.u64(q.loss_capacity);
    w.doubles({q.loss_history.begin(), q.loss_history.end()});
    w.u32(static_cast<std::uint32_t>(q.layers.size()));
    for (const auto& l : q.layers) {
        w.str(l.name);
        w.u32(static_cast<std::uint32_t>(l.format.word_length()));
        w.u32(static_cast<std::uint32_t>(l.format.frac_length()));
        w.u32(static_cast<std::uint32_t>(l.lookback));
        w.u32(static_cast<std::uint32_t>(l.resolution));
        w.u64(l.grads.capacity());
        w.u32(static_cast<std::uint32_t>(l.grads.size()));
        for (const auto& g : l.grads.entries()) w.doubles(g);
    }
    return w.take();
}

TrainingState deserialize_state(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    char magic[4];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw ParseError("checkpoint: bad magic");
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw ParseError(fmt::format("checkpoint: unsupported version {}", version));

    const std::uint64_t seed = r.u64();
    const std::uint64_t step = r.u64();
    const std::uint32_t epoch = r.u32();
    const std::uint32_t batch_in_epoch = r.u32();

    const std::uint32_t rank = r.u32();
    r.check_count(rank, 4);
    Shape in(rank);
    for (auto& d : in) d = r.u32();
    const std::uint32_t nspecs = r.u32();
    r.check_count(nspecs, 32);
    std::vector<LayerSpec> specs;
    for (std::uint32_t i = 0; i < nspecs; ++i) specs.push_back(read_spec(r));

    Network net = [&] {
        try {
            return Network::build(in, specs);
        } catch (const std::invalid_argument& e) {
            throw ParseError(fmt::format("checkpoint: invalid architecture: {}", e.what()));
        }
    }();
    for (std::size_t idx : net.trainable_indices()) {
        Layer& l = net.layer(idx);
        read_tensor_into(r, l.weight, l.name + ".weight");
        read_tensor_into(r, l.bias, l.name + ".bias");
        read_tensor_into(r, l.qweight, l.name + ".qweight");
        read_tensor_into(r, l.qbias, l.name + ".qbias");
    }

    QuantizationMapping q;
    const std::uint32_t strategy = r.u32();
    if (strategy > static_cast<std::uint32_t>(Strategy::Max)) throw ParseError("checkpoint: unknown strategy");
    q.strategy = static_cast<Strategy>(strategy);
    q.loss_capacity = r.u64();
    const auto losses = r.doubles();
    q.loss_history.assign(losses.begin(), losses.end());
    const std::uint32_t nlayers = r.u32();
    r.check_count(nlayers, 4);
    for (std::uint32_t i = 0; i < nlayers; ++i) {
        std::string name = r.str();
        const int wl = checked_int(r.u32(), "word length");
        const int fl = checked_int(r.u32(), "fractional length");
        if (!FixedPointFormat::is_valid(wl, fl)) {
            throw ParseError(fmt::format("checkpoint: invalid format <{},{}> for '{}'", wl, fl, name));
        }
        const int lb = checked_int(r.u32(), "lookback");
        const int res = checked_int(r.u32(), "resolution");
        const std::uint64_t cap = r.u64();
        if (cap == 0 || cap > 1u << 20) throw ParseError("checkpoint: implausible history capacity");
        GradientHistory hist(cap);
        const std::uint32_t n = r.u32();
        if (n > cap) throw ParseError("checkpoint: gradient history exceeds its capacity");
        for (std::uint32_t k = 0; k < n; ++k) {
            try {
                hist.push(r.doubles());
            } catch (const std::invalid_argument& e) {
                throw ParseError(fmt::format("checkpoint: {}", e.what()));
            }
        }
        if (!net.find(name)) throw ParseError(fmt::format("checkpoint: mapping names unknown layer '{}'", name));
        q.layers.push_back(LayerQuantState{std::move(name), FixedPointFormat{wl, fl}, lb, res, std::move(hist)});
    }
    if (q.layers.size() != net.trainable_indices().size()) {
        throw ParseError("checkpoint: mapping does not cover every trainable layer");
    }
    if (!r.done()) throw ParseError(fmt::format("checkpoint: {} trailing bytes", bytes.size() - r.pos()));

    return TrainingState{std::move(net), std::move(q), seed, step, epoch, batch_in_epoch};
}

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state) {
    const auto bytes = serialize_state(state);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", tmp.string()));
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out.flush()) throw std::runtime_error(fmt::format("write to {} failed", tmp.string()));
    }
    std::filesystem::rename(tmp, path);
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open checkpoint {}", path.string()));
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_state(bytes);
}

}  // namespace mrvn

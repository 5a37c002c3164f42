#include "purecc/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "purecc/errors.hpp"

namespace purecc {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'C', 'K'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return std::bit_cast<double>(v);
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("checkpoint is truncated");
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_tensors(const std::vector<Tensor>& tensors) {
    std::string out(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (shape_size(t.shape) != t.values.size()) {
            throw ShapeError("tensor '" + t.name + "' values do not match its shape");
        }
        put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : t.values) put_f64(out, v);
    }
    return out;
}

std::vector<Tensor> decode_tensors(const std::string& bytes) {
    Reader in(bytes);
    if (in.str(4) != std::string(kMagic, 4)) throw FormatError("not a PCCK checkpoint");
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint32_t count = in.u32();
    std::vector<Tensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        Tensor t;
        t.name = in.str(in.u32());
        const std::uint32_t rank = in.u32();
        for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(in.u32());
        t.values.resize(shape_size(t.shape));
        for (double& v : t.values) v = in.f64();
        tensors.push_back(std::move(t));
    }
    if (!in.done()) throw FormatError("trailing bytes after the last tensor");
    return tensors;
}

std::vector<Tensor> network_tensors(const VelocityNetwork& net) {
    std::vector<Tensor> tensors = net.parameters();
    Tensor meta("meta", {3});
    meta.values = {static_cast<double>(net.config().concept_token_id()), net.frozen() ? 1.0 : 0.0,
                   net.config().pooling == Pooling::mean ? 1.0 : 0.0};
    tensors.push_back(std::move(meta));
    return tensors;
}

void save_checkpoint(const std::filesystem::path& path, const VelocityNetwork& net) {
    const std::string bytes = encode_tensors(network_tensors(net));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("failed writing " + path.string());
}

VelocityNetwork load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw PrerequisiteError("cannot open checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return VelocityNetwork::from_tensors(decode_tensors(bytes));
}

}  // namespace purecc

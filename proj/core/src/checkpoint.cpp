#include "stacktrack/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace stacktrack {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'T', 'K', 'W'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    const std::size_t n = out.size();
    out.resize(n + sizeof(T));
    std::memcpy(out.data() + n, &v, sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) {
        throw ParseError("checkpoint truncated");
    }
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

} // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : arrays) {
        if (n == name) {
            return &t;
        }
    }
    return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put<std::uint8_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.meta.size()));
    out.insert(out.end(), ckpt.meta.begin(), ckpt.meta.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
    for (const auto& [name, t] : ckpt.arrays) {
        put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put<std::uint8_t>(out, static_cast<std::uint8_t>(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) {
            put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim(i)));
        }
        const std::size_t n = out.size();
        const std::size_t bytes = t.numel() * sizeof(double);
        out.resize(n + bytes);
        std::memcpy(out.data() + n, t.data(), bytes);
    }
    return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw ParseError("not a weight checkpoint (bad magic)");
    }
    pos = 4;
    const auto version = take<std::uint8_t>(bytes, pos);
    if (version != kVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    const auto meta_len = take<std::uint32_t>(bytes, pos);
    if (pos + meta_len > bytes.size()) {
        throw ParseError("checkpoint truncated in metadata");
    }
    ckpt.meta.assign(reinterpret_cast<const char*>(bytes.data() + pos), meta_len);
    pos += meta_len;
    const auto count = take<std::uint32_t>(bytes, pos);
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto name_len = take<std::uint16_t>(bytes, pos);
        if (pos + name_len > bytes.size()) {
            throw ParseError("checkpoint truncated in array name");
        }
        std::string name(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
        pos += name_len;
        const auto ndim = take<std::uint8_t>(bytes, pos);
        Shape shape;
        std::size_t numel = 1;
        for (std::uint8_t i = 0; i < ndim; ++i) {
            const auto d = take<std::uint32_t>(bytes, pos);
            shape.push_back(static_cast<int>(d));
            numel *= d;
        }
        if (pos + numel * sizeof(double) > bytes.size()) {
            throw ParseError("checkpoint truncated in array '" + name + "'");
        }
        std::vector<double> values(numel);
        std::memcpy(values.data(), bytes.data() + pos, numel * sizeof(double));
        pos += numel * sizeof(double);
        ckpt.arrays.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    }
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    const std::vector<std::uint8_t> bytes = encode_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw ParseError("cannot open '" + path + "' for writing");
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw ParseError("short write to '" + path + "'");
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw ParseError("cannot open '" + path + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

} // namespace stacktrack

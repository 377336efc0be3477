#include "dc/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <istream>
#include <ostream>

#include "dc/error.hpp"

namespace dc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'C', 'C', 'K', 'P', 'T', '0', '1'};

template <class T>
void put(std::ostream& out, T v)
{
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.write(buf, sizeof(T));
}

void put_string(std::ostream& out, const std::string& s)
{
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::istream& in)
{
    char buf[sizeof(T)];
    if (!in.read(buf, sizeof(T))) {
        throw InputError("checkpoint: unexpected end of file");
    }
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

std::string get_string(std::istream& in)
{
    const auto n = get<std::uint32_t>(in);
    if (n > (1U << 26)) {
        throw InputError("checkpoint: implausible string length");
    }
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), n)) {
        throw InputError("checkpoint: unexpected end of file");
    }
    return s;
}

} // namespace

std::string fingerprint_hex(std::uint64_t fp)
{
    return fmt::format("{:016x}", fp);
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt)
{
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kCheckpointVersion);
    put_string(out, ckpt.kind);
    put<std::uint64_t>(out, ckpt.vocab_fingerprint);
    put_string(out, ckpt.config.dump());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& p : ckpt.params) {
        put_string(out, p.name);
        put<std::uint8_t>(out, p.trainable ? 1 : 0);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
        for (auto d : p.tensor.shape()) {
            put<std::uint64_t>(out, d);
        }
        for (double v : p.tensor.values()) {
            put<double>(out, v);
        }
    }
    if (!out) {
        throw InputError("checkpoint: write failed");
    }
}

Checkpoint read_checkpoint(std::istream& in)
{
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw InputError("checkpoint: bad magic, not a checkpoint file");
    }
    const auto version = get<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw InputError(fmt::format("checkpoint: unsupported version {}", version));
    }
    Checkpoint ckpt;
    ckpt.kind = get_string(in);
    ckpt.vocab_fingerprint = get<std::uint64_t>(in);
    ckpt.config = nlohmann::json::parse(get_string(in));
    const auto count = get<std::uint32_t>(in);
    for (std::uint32_t k = 0; k < count; ++k) {
        auto name = get_string(in);
        const bool trainable = get<std::uint8_t>(in) != 0;
        const auto rank = get<std::uint32_t>(in);
        if (rank > 8) {
            throw InputError("checkpoint: implausible tensor rank");
        }
        Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r) {
            shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(in)));
        }
        Tensor t(shape);
        for (auto& v : t.values()) {
            v = get<double>(in);
        }
        ckpt.params.add(std::move(name), std::move(t), trainable);
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InputError(fmt::format("cannot write checkpoint {}", path.string()));
    }
    write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError(fmt::format("cannot open checkpoint {}", path.string()));
    }
    return read_checkpoint(in);
}

} // namespace dc

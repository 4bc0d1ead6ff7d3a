#include "kronmark/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "kronmark/errors.hpp"

namespace kronmark {
namespace {

constexpr char kMagic[4] = {'K', 'M', 'C', 'K'};

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
   public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

    template <typename U>
    U get() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
        pos_ += sizeof(U);
        return v;
    }
    void bytes(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, b_.data() + pos_, n);
        pos_ += n;
    }
    bool done() const { return pos_ == b_.size(); }

   private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw ParseError("checkpoint: truncated file", 0);
    }
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

}  // namespace

const Tensor<float>& Checkpoint::at(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t.value;
    throw ParseError("checkpoint: no tensor named '" + name + "'", 0);
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    out.insert(out.end(), ckpt.config_digest.begin(), ckpt.config_digest.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, value] : ckpt.tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put<std::uint32_t>(out, static_cast<std::uint32_t>(value.rank()));
        for (std::size_t e : value.shape()) put<std::uint64_t>(out, e);
        for (float v : value.data()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("checkpoint: bad magic", 0);
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version), 0);
    Checkpoint ckpt;
    r.bytes(ckpt.config_digest.data(), ckpt.config_digest.size());
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = r.get<std::uint32_t>();
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw ParseError("checkpoint: implausible rank", 0);
        Shape shape(rank);
        for (auto& e : shape) e = static_cast<std::size_t>(r.get<std::uint64_t>());
        std::size_t n = 1;
        for (auto e : shape) {
            if (e == 0 || e > (std::size_t{1} << 32)) throw ParseError("checkpoint: implausible extent", 0);
            n *= e;
        }
        std::vector<float> values(n);
        for (auto& v : values) v = std::bit_cast<float>(r.get<std::uint32_t>());
        ckpt.tensors.push_back({std::move(name), Tensor<float>(std::move(shape), std::move(values))});
    }
    if (!r.done()) throw ParseError("checkpoint: trailing bytes", 0);
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError(path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace kronmark

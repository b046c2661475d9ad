#include "autood/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace autood {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint i/o assumes a little-endian host");

void put_u32(std::ofstream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

class Reader {
public:
    Reader(std::ifstream& is, const std::string& path) : is_(is), path_(path) {}

    bool at_eof() {
        is_.peek();
        return is_.eof();
    }
    uint32_t u32(const char* what) {
        uint32_t v = 0;
        read(reinterpret_cast<char*>(&v), 4, what);
        return v;
    }
    void read(char* dst, size_t n, const char* what) {
        is_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<size_t>(is_.gcount()) != n)
            throw FormatError(path_ + ": truncated " + what + " at byte offset " +
                              std::to_string(offset_));
        offset_ += n;
    }
    size_t offset() const { return offset_; }

private:
    std::ifstream& is_;
    std::string path_;
    size_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointEntries& entries) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    os.write("AODT", 4);
    put_u32(os, kCheckpointVersion);
    for (const auto& [name, t] : entries) {
        put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(os, static_cast<uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) throw FormatError("write failed for '" + path + "'");
}

CheckpointEntries load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open '" + path + "'");
    Reader r(is, path);
    char magic[4];
    r.read(magic, 4, "magic");
    if (std::memcmp(magic, "AODT", 4) != 0)
        throw FormatError(path + ": bad magic at byte offset 0");
    uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version));

    CheckpointEntries out;
    while (!r.at_eof()) {
        uint32_t name_len = r.u32("name length");
        if (name_len > (1u << 20)) throw FormatError(path + ": implausible name length");
        std::string name(name_len, '\0');
        r.read(name.data(), name_len, "name");
        uint32_t rank = r.u32("rank");
        if (rank > 8) throw FormatError(path + ": implausible rank");
        std::vector<int> shape(rank);
        for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(r.u32("dimension"));
        Tensor t(shape);
        r.read(reinterpret_cast<char*>(t.data.data()), t.data.size() * sizeof(double), "payload");
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace autood

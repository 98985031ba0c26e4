#include "m2r/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "m2r/error.hpp"

namespace m2r {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'M', '2', 'R', 'C', 'K', 'P', 'T', '\0'};

class Writer {
public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    void put_string(const std::string& s) {
        put<std::uint64_t>(s.size());
        bytes.insert(bytes.end(), s.begin(), s.end());
    }
    std::vector<char> bytes;
};

class Reader {
public:
    explicit Reader(std::vector<char> data) : data_(std::move(data)) {}

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string(const char* what) {
        const auto n = get<std::uint64_t>(what);
        need(n, what);
        std::string s(data_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    void need(std::uint64_t n, const char* what) const {
        if (n > data_.size() - pos_) throw CodecError(std::string("checkpoint truncated reading ") + what, pos_);
    }
    std::size_t pos() const { return pos_; }
    const char* at(std::size_t offset) const { return data_.data() + offset; }
    std::size_t size() const { return data_.size(); }

private:
    std::vector<char> data_;
    std::size_t pos_ = 0;
};

struct Entry {
    std::string name;
    std::uint32_t kind;
    Shape shape;
    std::uint64_t offset;
};

struct Parsed {
    std::string meta;
    std::vector<Entry> entries;
    std::size_t payload_start;
    Reader reader;
};

Parsed parse(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(data));
    r.need(sizeof(kMagic), "magic");
    if (std::memcmp(r.at(0), kMagic, sizeof(kMagic)) != 0) throw CodecError("not a checkpoint (bad magic)", 0);
    for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.get<char>("magic");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw CodecError("unsupported checkpoint version " + std::to_string(version), r.pos() - 4);
    }
    std::string meta = r.get_string("meta");
    const auto count = r.get<std::uint64_t>("entry count");
    std::vector<Entry> entries;
    for (std::uint64_t i = 0; i < count; ++i) {
        Entry e;
        e.name = r.get_string("entry name");
        e.kind = r.get<std::uint32_t>("entry kind");
        const auto rank = r.get<std::uint32_t>("entry rank");
        if (rank > 8) throw CodecError("implausible rank for '" + e.name + "'", r.pos() - 4);
        for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.get<std::uint64_t>("entry dims"));
        e.offset = r.get<std::uint64_t>("entry offset");
        entries.push_back(std::move(e));
    }
    const std::size_t payload_start = r.pos();
    for (const auto& e : entries) {
        const std::uint64_t bytes = numel(e.shape) * sizeof(double);
        if (e.offset + bytes > r.size() - payload_start) {
            throw CodecError("payload of '" + e.name + "' runs past end of file", payload_start + e.offset);
        }
    }
    return {std::move(meta), std::move(entries), payload_start, std::move(r)};
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    Writer header;
    for (char c : kMagic) header.put(c);
    header.put(kCheckpointVersion);
    header.put_string(model.config().serialize());
    const auto& params = model.store().parameters();
    const auto& buffers = model.store().buffers();
    header.put<std::uint64_t>(params.size() + buffers.size());
    std::vector<double> payload;
    auto add = [&](const std::string& name, std::uint32_t kind, const Shape& shape, std::span<const double> v) {
        header.put_string(name);
        header.put(kind);
        header.put<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) header.put<std::uint64_t>(d);
        header.put<std::uint64_t>(payload.size() * sizeof(double));
        payload.insert(payload.end(), v.begin(), v.end());
    };
    for (const auto& p : params) add(p->name, 0, p->tensor.shape(), p->tensor.values());
    for (const auto& b : buffers) add(b->name, 1, b->shape, b->values);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(header.bytes.data(), static_cast<std::streamsize>(header.bytes.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(double)));
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

void load_checkpoint_into(Model& model, const std::filesystem::path& path) {
    const Parsed parsed = parse(path);
    std::size_t matched = 0;
    for (const auto& e : parsed.entries) {
        std::span<double> dst;
        Shape shape;
        if (e.kind == 0) {
            auto* p = model.store().find_parameter(e.name);
            if (!p) throw ContractError("checkpoint entry '" + e.name + "' is not a model parameter");
            dst = p->tensor.mutable_values();
            shape = p->tensor.shape();
        } else if (e.kind == 1) {
            auto* b = model.store().find_buffer(e.name);
            if (!b) throw ContractError("checkpoint entry '" + e.name + "' is not a model buffer");
            dst = b->values;
            shape = b->shape;
        } else {
            throw CodecError("unknown entry kind for '" + e.name + "'", 0);
        }
        if (shape != e.shape) {
            throw DimensionError("checkpoint entry '" + e.name + "' has shape " + to_string(e.shape) +
                                 ", model expects " + to_string(shape));
        }
        std::memcpy(dst.data(), parsed.reader.at(parsed.payload_start + e.offset), dst.size() * sizeof(double));
        ++matched;
    }
    const std::size_t expected = model.store().parameters().size() + model.store().buffers().size();
    if (matched != expected) {
        throw ContractError("checkpoint holds " + std::to_string(matched) + " entries, model has " +
                            std::to_string(expected));
    }
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) {
    const Parsed parsed = parse(path);
    auto model = std::make_unique<Model>(NetworkConfig::deserialize(parsed.meta), 0);
    load_checkpoint_into(*model, path);
    return model;
}

}  // namespace m2r

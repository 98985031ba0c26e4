#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "m2r/checkpoint.hpp"
#include "m2r/error.hpp"
#include "test_util.hpp"

using namespace m2r;
using m2r::testing::random_tensor;

namespace {

NetworkConfig small_config() {
    NetworkConfig c;
    c.channels = {4, 6, 8, 8, 16};
    c.resolution = 16;
    c.decoder_width = 4;
    c.modules.i2 = false;
    return c;
}

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "m2r_test_checkpoint";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::vector<char> read_all(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
    Model m(small_config(), 3);
    std::mt19937_64 rng(1);
    auto rgb = random_tensor({2, 3, 16, 16}, rng, false, 0, 1);
    auto depth = random_tensor({2, 1, 16, 16}, rng, false, 0, 1);
    m.forward(rgb, depth, true);  // moves BN running statistics off their defaults
    const auto path = temp_file("roundtrip.ckpt");
    save_checkpoint(m, path);
    auto back = load_checkpoint(path);
    EXPECT_EQ(back->config().serialize(), m.config().serialize());
    ASSERT_EQ(back->store().parameters().size(), m.store().parameters().size());
    for (std::size_t i = 0; i < m.store().parameters().size(); ++i) {
        const auto a = m.store().parameters()[i]->tensor.values();
        const auto b = back->store().parameters()[i]->tensor.values();
        EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size_bytes()), 0) << m.store().parameters()[i]->name;
    }
    for (std::size_t i = 0; i < m.store().buffers().size(); ++i) {
        EXPECT_EQ(m.store().buffers()[i]->values, back->store().buffers()[i]->values);
    }
    const auto pa = m.forward(rgb, depth, false).saliency;
    const auto pb = back->forward(rgb, depth, false).saliency;
    EXPECT_EQ(std::memcmp(pa.values().data(), pb.values().data(), pa.values().size_bytes()), 0);
}

TEST(Checkpoint, MalformedFilesRaiseCodecError) {
    Model m(small_config(), 3);
    const auto good = temp_file("good.ckpt");
    save_checkpoint(m, good);
    const auto bytes = read_all(good);

    auto bad = bytes;
    bad[0] = 'X';
    write_all(temp_file("magic.ckpt"), bad);
    try {
        load_checkpoint(temp_file("magic.ckpt"));
        FAIL();
    } catch (const CodecError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }

    bad = bytes;
    bad[8] = 9;
    write_all(temp_file("version.ckpt"), bad);
    try {
        load_checkpoint(temp_file("version.ckpt"));
        FAIL();
    } catch (const CodecError& e) {
        EXPECT_EQ(e.offset(), 8u);
    }

    for (std::size_t cut : {std::size_t{4}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
        write_all(temp_file("cut.ckpt"), {bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)});
        EXPECT_THROW(load_checkpoint(temp_file("cut.ckpt")), CodecError) << cut;
    }
    EXPECT_THROW(load_checkpoint(temp_file("missing.ckpt")), IoError);
}

TEST(Checkpoint, ArchitectureMismatchIsRejected) {
    Model m(small_config(), 3);
    const auto path = temp_file("arch.ckpt");
    save_checkpoint(m, path);
    NetworkConfig wider = small_config();
    wider.channels = {4, 6, 8, 8, 24};
    Model w(wider, 0);
    EXPECT_THROW(load_checkpoint_into(w, path), DimensionError);
    NetworkConfig more = small_config();
    more.modules.i2 = true;
    Model extra(more, 0);
    EXPECT_THROW(load_checkpoint_into(extra, path), ContractError);
}

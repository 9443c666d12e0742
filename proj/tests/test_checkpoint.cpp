#include <gtest/gtest.h>

#include <filesystem>

#include "dlgn/bytes.hpp"
#include "dlgn/checkpoint.hpp"

using namespace dlgn;

TEST(Checkpoint, FnvKnownValues) {
    EXPECT_EQ(fnv1a(std::string_view("")), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a(std::string_view("a")), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Checkpoint, RoundTripIsExact) {
    const std::vector<std::size_t> widths{16, 8};
    const auto net = build_network(10, widths, 42);
    const auto head = make_group_sum_head(8, 2, 3.5, 0.1);
    const auto bytes = save_checkpoint(net, &head);
    const auto back = load_checkpoint(bytes);
    EXPECT_EQ(back.net, net);
    ASSERT_TRUE(back.head.has_value());
    EXPECT_EQ(*back.head, head);
    EXPECT_EQ(save_checkpoint(back.net, &*back.head), bytes);
    EXPECT_FALSE(load_checkpoint(save_checkpoint(net)).head.has_value());
}

TEST(Checkpoint, CodebookHeadRoundTrip) {
    const std::vector<std::size_t> widths{16, 12};
    const auto net = build_network(10, widths, 1);
    const auto head = make_codebook_head(codebook_generate(5, 4, 2, CodeReduction{12, 3.0}), 2.0);
    const auto back = load_checkpoint(save_checkpoint(net, &head));
    EXPECT_EQ(*back.head, head);
}

TEST(Checkpoint, CorruptionIsDetected) {
    const std::vector<std::size_t> widths{8, 4};
    const auto bytes = save_checkpoint(build_network(6, widths, 3));
    for (std::size_t pos = 0; pos < bytes.size(); pos += 37) {
        auto bad = bytes;
        bad[pos] ^= 0x01;
        EXPECT_THROW(load_checkpoint(bad), FormatError) << "byte " << pos;
    }
    auto cut = bytes;
    cut.resize(bytes.size() / 2);
    EXPECT_THROW(load_checkpoint(cut), FormatError);
    EXPECT_THROW(load_checkpoint(std::vector<std::uint8_t>{}), FormatError);
}

TEST(Checkpoint, FileRoundTripAndFingerprint) {
    const std::vector<std::size_t> widths{8, 4};
    const auto net = build_network(6, widths, 3);
    const auto path = std::filesystem::temp_directory_path() / "dlgn_ckpt.bin";
    write_checkpoint(path, net);
    EXPECT_EQ(read_checkpoint(path).net, net);
    std::filesystem::remove(path);
    EXPECT_EQ(fingerprint(net), fingerprint(build_network(6, widths, 3)));
    EXPECT_NE(fingerprint(net), fingerprint(build_network(6, widths, 4)));
    EXPECT_THROW(read_checkpoint("/nonexistent/ckpt.bin"), std::exception);
}

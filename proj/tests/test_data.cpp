#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "dlgn/bytes.hpp"
#include "dlgn/data.hpp"
#include "json.hpp"

using namespace dlgn;

namespace {

SyntheticSpec small_spec(std::size_t k, std::uint64_t seed) {
    SyntheticSpec s;
    s.num_classes = k;
    s.dim = 100;
    s.samples_per_class = 20;
    s.seed = seed;
    return s;
}

LabeledImages tiny_images(std::size_t n, std::uint32_t label_base) {
    LabeledImages im;
    im.pixels = Matrix<float>(n, 4);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < 4; ++c) im.pixels(r, c) = static_cast<float>((r + c) % 5) / 4.0f;
        im.labels.push_back(label_base + static_cast<std::uint32_t>(r % 2));
    }
    im.image_shape = {2, 2};
    return im;
}

}  // namespace

TEST(Data, SyntheticSignaturesHoldInEverySample) {
    const auto syn = generate_synthetic(small_spec(10, 1));
    const auto& ds = syn.data;
    ASSERT_EQ(ds.size(), 200u);
    ASSERT_EQ(syn.classes.size(), 10u);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        const auto& sig = syn.classes[ds.labels[r]];
        EXPECT_GE(sig.positions.size(), 5u);
        EXPECT_LE(sig.positions.size(), 40u);
        for (std::size_t i = 0; i < sig.positions.size(); ++i) {
            ASSERT_EQ(ds.bits.get(r, sig.positions[i]), sig.values[i] != 0);
        }
    }
    ds.validate();
}

TEST(Data, SyntheticFreeBitsAreBalanced) {
    SyntheticSpec s = small_spec(2, 3);
    s.samples_per_class = 2000;
    s.fixed_bits_max = 5;
    const auto syn = generate_synthetic(s);
    std::set<std::uint32_t> fixed(syn.classes[0].positions.begin(), syn.classes[0].positions.end());
    std::size_t ones = 0, total = 0;
    for (std::size_t r = 0; r < 2000; ++r) {
        for (std::uint32_t c = 0; c < 100; ++c) {
            if (fixed.count(c)) continue;
            ones += syn.data.bits.get(r, c);
            ++total;
        }
    }
    EXPECT_NEAR(static_cast<double>(ones) / static_cast<double>(total), 0.5, 0.01);
}

TEST(Data, SyntheticIsDeterministicAndStratified) {
    const auto a = generate_synthetic(small_spec(10, 5));
    const auto b = generate_synthetic(small_spec(10, 5));
    const auto c = generate_synthetic(small_spec(10, 6));
    EXPECT_EQ(encode_dataset(a.data), encode_dataset(b.data));
    EXPECT_NE(encode_dataset(a.data), encode_dataset(c.data));
    EXPECT_EQ(a.data.splits.test.size(), 40u);
    std::vector<int> per_class(10, 0);
    for (auto i : a.data.splits.test) ++per_class[a.data.labels[i]];
    for (int v : per_class) EXPECT_EQ(v, 4);
}

TEST(Data, ManyClassesHaveDistinctSignatures) {
    SyntheticSpec s = small_spec(2000, 7);
    s.dim = 784;
    s.samples_per_class = 1;
    s.test_fraction = 0;
    const auto syn = generate_synthetic(s);
    std::set<std::pair<std::vector<std::uint32_t>, std::vector<std::uint8_t>>> seen;
    for (const auto& sig : syn.classes) seen.insert({sig.positions, sig.values});
    EXPECT_EQ(seen.size(), 2000u);
}

TEST(Data, SyntheticSpecValidation) {
    auto s = small_spec(1, 0);
    EXPECT_THROW(generate_synthetic(s), std::invalid_argument);
    s = small_spec(2, 0);
    s.fixed_bits_max = 101;
    EXPECT_THROW(generate_synthetic(s), std::invalid_argument);
}

TEST(Data, SignaturesJsonLists) {
    const auto s = small_spec(3, 1);
    const auto syn = generate_synthetic(s);
    const auto j = nlohmann::json::parse(signatures_json(s, syn.classes));
    ASSERT_EQ(j["classes"].size(), 3u);
    EXPECT_EQ(j["classes"][1]["positions"].get<std::vector<std::uint32_t>>(), syn.classes[1].positions);
}

TEST(Data, BinarizeAndThresholdExpand) {
    const std::vector<float> x{0.2f, 0.5f, 0.51f, 0.9f};
    EXPECT_EQ(binarize(x), (std::vector<std::uint8_t>{0, 0, 1, 1}));
    std::vector<float> rgb(kRgbLength, 0.0f);
    rgb[0] = 0.6f;
    rgb[1] = 0.3f;
    rgb[2] = 0.8f;
    const auto e = threshold_expand(rgb);
    ASSERT_EQ(e.size(), 3 * kRgbLength);
    EXPECT_EQ(e[0], 1);
    EXPECT_EQ(e[kRgbLength], 1);
    EXPECT_EQ(e[2 * kRgbLength], 0);
    EXPECT_EQ(e[1], 1);
    EXPECT_EQ(e[kRgbLength + 1], 0);
    EXPECT_EQ(e[2 * kRgbLength + 2], 1);
    EXPECT_THROW(threshold_expand(x), std::invalid_argument);
}

TEST(Data, IdxRoundTripAndErrors) {
    IdxTensor t{{2, 2, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}};
    const auto bytes = encode_idx(t);
    EXPECT_EQ(bytes[3], 3);
    EXPECT_EQ(bytes[7], 2);
    EXPECT_EQ(parse_idx(bytes), t);
    auto truncated = bytes;
    truncated.pop_back();
    EXPECT_THROW(parse_idx(truncated), FormatError);
    auto bad = bytes;
    bad[2] = 0x0D;
    EXPECT_THROW(parse_idx(bad), FormatError);

    const auto dir = std::filesystem::temp_directory_path();
    write_file(dir / "dlgn_img.idx", bytes);
    write_file(dir / "dlgn_lab.idx", encode_idx({{2}, {3, 7}}));
    const auto im = load_idx(dir / "dlgn_img.idx", dir / "dlgn_lab.idx");
    EXPECT_EQ(im.pixels.rows(), 2u);
    EXPECT_EQ(im.pixels.cols(), 6u);
    EXPECT_FLOAT_EQ(im.pixels(1, 5), 12.0f / 255.0f);
    EXPECT_EQ(im.labels, (std::vector<std::uint32_t>{3, 7}));
    write_file(dir / "dlgn_lab.idx", encode_idx({{3}, {3, 7, 1}}));
    EXPECT_THROW(load_idx(dir / "dlgn_img.idx", dir / "dlgn_lab.idx"), FormatError);
    std::filesystem::remove(dir / "dlgn_img.idx");
    std::filesystem::remove(dir / "dlgn_lab.idx");
}

TEST(Data, ImagesSplitsAndConcat) {
    auto a = dataset_from_images(tiny_images(10, 0), tiny_images(4, 0), 2, "left");
    const auto b = dataset_from_images(tiny_images(6, 0), tiny_images(2, 0), 2, "right");
    EXPECT_EQ(a.splits.train.size(), 10u);
    EXPECT_EQ(a.splits.test.size(), 4u);
    EXPECT_TRUE(a.real.has_value());
    make_validation_split(a, 0.2, 3);
    EXPECT_EQ(a.splits.val.size(), 2u);
    EXPECT_EQ(a.splits.train.size(), 8u);
    a.validate();

    const auto c = concat_datasets({a, b});
    EXPECT_EQ(c.num_classes, 4u);
    EXPECT_EQ(c.size(), 22u);
    EXPECT_EQ(c.labels[14], 2u);
    ASSERT_EQ(c.label_map.size(), 4u);
    EXPECT_EQ(c.label_map[3].source_label, 1u);
    EXPECT_NE(c.label_map[3].source.find("right"), std::string::npos);
    c.validate();
    EXPECT_NE(label_map_csv(c).find("label,source,source_label"), std::string::npos);

    const auto two = take_classes(c, 2);
    EXPECT_EQ(two.size(), 14u);
    EXPECT_EQ(take_classes(c, 4), c);
    EXPECT_THROW(take_classes(c, 5), std::invalid_argument);
    BinaryDataset wrong = b;
    wrong.bits = BitMatrix(b.size(), 5);
    EXPECT_THROW(concat_datasets({a, wrong}), std::invalid_argument);
}

TEST(Data, ValidateCatchesBadLabelsAndOverlap) {
    auto ds = generate_synthetic(small_spec(2, 1)).data;
    auto bad = ds;
    bad.labels[0] = 5;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = ds;
    bad.splits.test.push_back(bad.splits.train.front());
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Data, ContainerRoundTripAndCorruption) {
    auto ds = dataset_from_images(tiny_images(10, 0), tiny_images(4, 0), 2, "imgs");
    make_validation_split(ds, 0.3, 1);
    const auto bytes = encode_dataset(ds);
    EXPECT_EQ(decode_dataset(bytes), ds);
    for (std::size_t pos : {std::size_t{0}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
        auto flipped = bytes;
        flipped[pos] ^= 0x10;
        EXPECT_THROW(decode_dataset(flipped), FormatError) << "byte " << pos;
    }
    auto cut = bytes;
    cut.resize(cut.size() - 9);
    EXPECT_THROW(decode_dataset(cut), FormatError);
    const auto path = std::filesystem::temp_directory_path() / "dlgn_ds.bin";
    save_dataset(path, ds);
    EXPECT_EQ(load_dataset(path), ds);
    std::filesystem::remove(path);
}

TEST(Data, GatherInputs) {
    const auto ds = dataset_from_images(tiny_images(3, 0), tiny_images(1, 0), 2, "g");
    const std::vector<std::uint32_t> rows{2, 0};
    const auto bin = gather_inputs(ds, rows);
    const auto real = gather_inputs(ds, rows, true);
    for (std::size_t c = 0; c < 4; ++c) {
        EXPECT_EQ(bin(0, c), ds.bits.get(2, c) ? 1.0 : 0.0);
        EXPECT_DOUBLE_EQ(real(1, c), static_cast<double>((*ds.real)(0, c)));
    }
    const auto bits = gather_bits(ds, rows);
    EXPECT_EQ(bits(1, 3), ds.bits.get(0, 3) ? 1 : 0);
    auto no_real = ds;
    no_real.real.reset();
    EXPECT_THROW(gather_inputs(no_real, rows, true), std::invalid_argument);
}

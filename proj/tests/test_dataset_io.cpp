#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace optimus;
namespace fs = std::filesystem;

namespace {

Dataset small_dataset(std::uint64_t seed, int count) {
    BenchmarkOptions o;
    o.num_series = count;
    o.height = 16;
    o.width = 16;
    o.n_images = 10;
    o.change_edge_min = 4;
    o.change_edge_max = 8;
    o.cloud_probability = 0.4;
    o.seed = seed;
    Dataset ds;
    for (const auto& spec : benchmark_specs(o)) {
        auto s = generate_scene(spec);
        ds.manifest.series.push_back(manifest_entry(s, spec));
        ds.series.push_back(std::move(s));
    }
    return ds;
}

}  // namespace

TEST(Quantize, HalfMapsTo128) {
    EXPECT_EQ(quantize(0.5f), 128);
    EXPECT_EQ(dequantize(128), 128.0f / 255.0f);
    EXPECT_EQ(quantize(0.0f), 0);
    EXPECT_EQ(quantize(1.0f), 255);
    for (int b = 0; b < 256; ++b)
        EXPECT_EQ(quantize(dequantize(static_cast<std::uint8_t>(b))), b);
}

TEST(Pixmap, PpmRoundTripAndComments) {
    Image img(3, 5);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = dequantize(static_cast<std::uint8_t>(i * 7 % 256));
    const auto bytes = encode_ppm(img);
    EXPECT_EQ(decode_ppm(bytes).pixels, img.pixels);
    const std::string commented = "P6\n# made by hand\n5 3\n255\n" + bytes.substr(bytes.size() - 45);
    EXPECT_EQ(decode_ppm(commented).pixels, img.pixels);
}

TEST(Pixmap, PbmRoundTrip) {
    std::vector<std::uint8_t> mask(7 * 11);
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = (i * 13 % 5) == 0;
    EXPECT_EQ(decode_pbm(encode_pbm(mask, 7, 11), 7, 11, "m"), mask);
}

TEST(Pixmap, CorruptHeaderNamesOrigin) {
    try {
        decode_ppm("P5\n1 1\n255\nx", "/data/s1/0000.ppm");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("/data/s1/0000.ppm"), std::string::npos);
    }
    EXPECT_THROW(decode_ppm("P6\n2 2\n255\nabc", "short"), Error);
    EXPECT_THROW(decode_ppm("P6\n2 2\n65535\n", "deep"), Error);
}

TEST(Dataset, RoundTripEqualsQuantized) {
    const auto root = fixtures::temp_dir("roundtrip");
    auto ds = small_dataset(21, 6);
    save_dataset(ds, root / "a");
    const auto loaded = load_dataset(root / "a");
    ASSERT_EQ(loaded.series.size(), ds.series.size());
    for (std::size_t i = 0; i < ds.series.size(); ++i) {
        auto q = ds.series[i];
        quantize_in_place(q);
        EXPECT_EQ(loaded.series[i], q);
        EXPECT_EQ(loaded.manifest.series[i].event, ds.manifest.series[i].event);
        EXPECT_EQ(loaded.manifest.series[i].changed, ds.manifest.series[i].changed);
    }
    // a second save of the loaded data is byte-identical
    save_dataset(loaded, root / "b");
    EXPECT_EQ(read_file(root / "a" / "manifest.json"), read_file(root / "b" / "manifest.json"));
    for (const auto& e : loaded.manifest.series)
        for (int k = 0; k < e.n; ++k) {
            const auto name = frame_name(static_cast<std::size_t>(k), "ppm");
            EXPECT_EQ(read_file(root / "a" / e.directory / name), read_file(root / "b" / e.directory / name));
        }
    fs::remove_all(root);
}

TEST(Dataset, RoundTripProperty) {
    const auto root = fixtures::temp_dir("roundtrip_prop");
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
        auto ds = small_dataset(seed, 2);
        save_dataset(ds, root);
        const auto loaded = load_dataset(root);
        for (std::size_t i = 0; i < ds.series.size(); ++i) {
            quantize_in_place(ds.series[i]);
            EXPECT_EQ(loaded.series[i], ds.series[i]);
        }
        fs::remove_all(root);
    }
}

TEST(Dataset, EmptyDatasetIsValid) {
    const auto root = fixtures::temp_dir("empty");
    save_dataset(Dataset{}, root);
    const auto j = nlohmann::json::parse(read_file(root / "manifest.json"));
    EXPECT_EQ(j.at("format"), 1);
    EXPECT_TRUE(j.at("series").empty());
    EXPECT_TRUE(load_dataset(root).series.empty());
    fs::remove_all(root);
}

TEST(Dataset, CountMismatchNamesDirectory) {
    const auto root = fixtures::temp_dir("mismatch");
    auto ds = small_dataset(5, 1);
    save_dataset(ds, root);
    const auto dir = root / ds.manifest.series[0].directory;
    fs::remove(dir / frame_name(3, "ppm"));
    try {
        load_dataset(root);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find(dir.string()), std::string::npos);
    }
    fs::remove_all(root);
}

TEST(Dataset, CorruptPixmapNamesFile) {
    const auto root = fixtures::temp_dir("corrupt");
    auto ds = small_dataset(6, 1);
    save_dataset(ds, root);
    const auto bad = root / ds.manifest.series[0].directory / frame_name(2, "ppm");
    write_file(bad, "P6\n16 16\n255\n");
    try {
        load_dataset(root);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find(bad.string()), std::string::npos);
    }
    fs::remove_all(root);
}

TEST(Dataset, LayoutUsesSeriesIdDirectories) {
    const auto root = fixtures::temp_dir("layout");
    auto ds = small_dataset(8, 2);
    save_dataset(ds, root);
    EXPECT_TRUE(fs::exists(root / ds.series[1].id / "0000.ppm"));
    EXPECT_TRUE(fs::exists(root / ds.series[1].id / "clouds" / "0000.pbm"));
    fs::remove_all(root);
}

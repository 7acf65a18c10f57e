#include <cstdlib>
#include <fstream>
#include <set>

#include "advdet/data_io.hpp"
#include "test_util.hpp"

using namespace advdet;
namespace fs = std::filesystem;

namespace {

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>((v >> s) & 0xff));
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

struct IdxPair {
    fs::path images, labels;
};

IdxPair write_idx(const fs::path& dir, std::size_t n_images, std::size_t n_labels, std::uint32_t img_magic = 0x803,
                  std::size_t drop_pixels = 0) {
    std::vector<unsigned char> img, lab;
    put_be32(img, img_magic);
    put_be32(img, static_cast<std::uint32_t>(n_images));
    put_be32(img, 4);
    put_be32(img, 3);
    for (std::size_t i = 0; i < n_images * 12 - drop_pixels; ++i) img.push_back(static_cast<unsigned char>(i % 256));
    if (n_images > 0 && drop_pixels == 0) img[16] = 255;
    put_be32(lab, 0x801);
    put_be32(lab, static_cast<std::uint32_t>(n_labels));
    for (std::size_t i = 0; i < n_labels; ++i) lab.push_back(static_cast<unsigned char>(i % 10));
    IdxPair p{dir / "img.idx", dir / "lab.idx"};
    write_bytes(p.images, img);
    write_bytes(p.labels, lab);
    return p;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

Dataset balanced(std::size_t per_class, std::size_t classes) {
    Dataset d;
    const std::size_t n = per_class * classes;
    d.images = Tensor(Shape{n, 1, 1, 2});
    for (std::size_t i = 0; i < n; ++i) {
        d.labels.push_back(static_cast<int>(i % classes));
        d.images.row(i)[0] = static_cast<double>(i) / static_cast<double>(n);
    }
    d.num_classes = classes;
    return d;
}

}  // namespace

TEST_CASE("idx loading") {
    const auto dir = testutil::temp_dir("idx");
    SUBCASE("valid pair") {
        const auto p = write_idx(dir, 10, 10);
        const Dataset d = load_idx(p.images, p.labels);
        CHECK(d.size() == 10);
        CHECK(d.image_shape() == Shape{1, 4, 3});
        CHECK(d.images[0] == 1.0);
        CHECK(d.images[1] == doctest::Approx(1.0 / 255));
        CHECK(d.labels[7] == 7);
        CHECK(d.num_classes == 10);
        CHECK(d.one_hot().shape() == Shape{10, 10});
    }
    SUBCASE("count mismatch") {
        const auto p = write_idx(dir, 10, 9);
        CHECK_ERROR_CODE(load_idx(p.images, p.labels), ErrorCode::CountMismatch);
    }
    SUBCASE("bad magic") {
        const auto p = write_idx(dir, 10, 10, 0x804);
        CHECK_ERROR_CODE(load_idx(p.images, p.labels), ErrorCode::BadMagic);
    }
    SUBCASE("truncated pixels") {
        const auto p = write_idx(dir, 10, 10, 0x803, 5);
        CHECK_ERROR_CODE(load_idx(p.images, p.labels), ErrorCode::TruncatedFile);
    }
    SUBCASE("truncated header") {
        write_bytes(dir / "short", {0, 0, 8});
        const auto p = write_idx(dir, 1, 1);
        CHECK_ERROR_CODE(load_idx(dir / "short", p.labels), ErrorCode::TruncatedFile);
    }
    SUBCASE("missing file") {
        CHECK_ERROR_CODE(load_idx(dir / "none", dir / "none"), ErrorCode::IoError);
    }
}

TEST_CASE("csv loading") {
    const auto dir = testutil::temp_dir("csv");
    SUBCASE("two rows of five pixels") {
        write_text(dir / "a.csv", "3,0,0.25,0.5,0.75,1\n1,1,1,1,1,0\n");
        const Dataset d = load_csv(dir / "a.csv");
        CHECK(d.size() == 2);
        CHECK(d.image_shape() == Shape{1, 1, 5});
        CHECK(d.labels == std::vector<int>{3, 1});
        CHECK(d.images[3] == 0.75);
        CHECK(d.num_classes == 4);
    }
    SUBCASE("square rows become images") {
        write_text(dir / "b.csv", "0,0,0.1,0.2,0.3\n");
        CHECK(load_csv(dir / "b.csv").image_shape() == Shape{1, 2, 2});
        CHECK(load_csv(dir / "b.csv", Shape{1, 1, 4}).image_shape() == Shape{1, 1, 4});
        CHECK_ERROR_CODE(load_csv(dir / "b.csv", Shape{1, 3, 3}), ErrorCode::RaggedRows);
    }
    SUBCASE("out of range pixel") {
        write_text(dir / "c.csv", "0,0.5,1.5\n");
        CHECK_ERROR_CODE(load_csv(dir / "c.csv"), ErrorCode::OutOfRangePixel);
    }
    SUBCASE("empty file") {
        write_text(dir / "d.csv", "");
        CHECK_ERROR_CODE(load_csv(dir / "d.csv"), ErrorCode::RaggedRows);
    }
    SUBCASE("ragged rows") {
        write_text(dir / "e.csv", "0,0.1,0.2\n1,0.3\n");
        CHECK_ERROR_CODE(load_csv(dir / "e.csv"), ErrorCode::RaggedRows);
    }
    SUBCASE("bad number") {
        write_text(dir / "f.csv", "0,abc\n");
        CHECK_ERROR_CODE(load_csv(dir / "f.csv"), ErrorCode::ParseError);
    }
}

TEST_CASE("subsets") {
    const Dataset d = balanced(20, 10);
    SUBCASE("full size keeps every sample in order") {
        const Dataset s = subset(d, d.size(), 3, false);
        CHECK(s.images == d.images);
        CHECK(s.labels == d.labels);
    }
    SUBCASE("stratified draw") {
        const Dataset s = subset(d, 100, 4, true);
        for (std::size_t c : s.class_counts()) CHECK(c == 10);
    }
    SUBCASE("deterministic per seed") {
        CHECK(sample_indices(d, 37, 5, false) == sample_indices(d, 37, 5, false));
        CHECK(sample_indices(d, 37, 5, true) == sample_indices(d, 37, 5, true));
        CHECK(sample_indices(d, 37, 5, false) != sample_indices(d, 37, 6, false));
        const auto idx = sample_indices(d, 37, 5, true);
        CHECK(std::is_sorted(idx.begin(), idx.end()));
        CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 37);
    }
    SUBCASE("too large") {
        CHECK_ERROR_CODE(subset(d, 201, 1, false), ErrorCode::TooLarge);
        const std::vector<std::size_t> bad{500};
        CHECK_ERROR_CODE(take(d, bad), ErrorCode::TooLarge);
    }
    SUBCASE("split is a disjoint partition") {
        const auto [a, b] = split(d, 60, 7, true);
        CHECK(a.size() == 60);
        CHECK(b.size() == 140);
        std::multiset<double> all;
        for (std::size_t i = 0; i < a.size(); ++i) all.insert(a.image(i)[0]);
        for (std::size_t i = 0; i < b.size(); ++i) all.insert(b.image(i)[0]);
        std::multiset<double> orig;
        for (std::size_t i = 0; i < d.size(); ++i) orig.insert(d.image(i)[0]);
        CHECK(all == orig);
    }
}

TEST_CASE("data directory override") {
    unsetenv("ADVARTIFACT_DATA_DIR");
    CHECK(data_dir("x") == fs::path("x"));
    setenv("ADVARTIFACT_DATA_DIR", "/tmp/somewhere", 1);
    CHECK(data_dir("x") == fs::path("/tmp/somewhere"));
    unsetenv("ADVARTIFACT_DATA_DIR");
}

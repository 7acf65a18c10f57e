#include "advdet/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "advdet/errors.hpp"
#include "advdet/rng.hpp"

namespace advdet {

Shape Dataset::image_shape() const {
    const auto& s = images.shape();
    return Shape(s.begin() + 1, s.end());
}

Tensor Dataset::one_hot() const {
    Tensor out(Shape{size(), num_classes});
    for (std::size_t i = 0; i < size(); ++i) out.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
    return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    return counts;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& what) {
    if (bytes.size() < offset + 4) fail(ErrorCode::TruncatedFile, what + ": header truncated");
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::size_t count_classes(const std::vector<int>& labels) {
    if (labels.empty()) return 0;
    return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);
    const std::string img_name = images_path.filename().string();
    const std::string lab_name = labels_path.filename().string();

    if (read_be32(img, 0, img_name) != 0x00000803u) fail(ErrorCode::BadMagic, img_name + ": not an IDX image file");
    if (read_be32(lab, 0, lab_name) != 0x00000801u) fail(ErrorCode::BadMagic, lab_name + ": not an IDX label file");

    const std::size_t n = read_be32(img, 4, img_name);
    const std::size_t rows = read_be32(img, 8, img_name);
    const std::size_t cols = read_be32(img, 12, img_name);
    const std::size_t n_labels = read_be32(lab, 4, lab_name);
    if (n != n_labels)
        fail(ErrorCode::CountMismatch, std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");

    const std::size_t pixels = rows * cols;
    if (img.size() < 16 + n * pixels) fail(ErrorCode::TruncatedFile, img_name + ": pixel data truncated");
    if (lab.size() < 8 + n) fail(ErrorCode::TruncatedFile, lab_name + ": label data truncated");

    Dataset ds;
    std::vector<double> data(n * pixels);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<double>(img[16 + i]) / 255.0;
    ds.images = Tensor(Shape{n, 1, rows, cols}, std::move(data));
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = lab[8 + i];
    ds.num_classes = count_classes(ds.labels);
    ds.split = "all";
    return ds;
}

Dataset load_csv(const std::filesystem::path& path, std::optional<Shape> image_shape) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());

    std::vector<int> labels;
    std::vector<double> pixels;
    std::size_t width = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::size_t fields = 0;
        const char* p = line.data();
        const char* end = p + line.size();
        while (true) {
            const char* comma = std::find(p, end, ',');
            double value = 0.0;
            const auto [ptr, ec] = std::from_chars(p, comma, value);
            if (ec != std::errc() || ptr != comma)
                fail(ErrorCode::ParseError, path.filename().string() + ":" + std::to_string(line_no) + ": bad number");
            if (fields == 0) {
                if (value < 0 || value != std::floor(value))
                    fail(ErrorCode::ParseError, path.filename().string() + ":" + std::to_string(line_no) + ": bad label");
                labels.push_back(static_cast<int>(value));
            } else {
                if (!(value >= 0.0 && value <= 1.0))
                    fail(ErrorCode::OutOfRangePixel, path.filename().string() + ":" + std::to_string(line_no) +
                                                         ": pixel " + std::string(p, comma) + " outside [0, 1]");
                pixels.push_back(value);
            }
            ++fields;
            if (comma == end) break;
            p = comma + 1;
        }
        if (width == 0) width = fields;
        if (fields != width || fields < 2)
            fail(ErrorCode::RaggedRows, path.filename().string() + ":" + std::to_string(line_no) + ": expected " +
                                            std::to_string(width) + " fields, got " + std::to_string(fields));
    }
    if (labels.empty()) fail(ErrorCode::RaggedRows, path.filename().string() + ": no rows");

    const std::size_t per_image = width - 1;
    Shape shape;
    if (image_shape) {
        if (shape_size(*image_shape) != per_image)
            fail(ErrorCode::RaggedRows, "rows hold " + std::to_string(per_image) + " pixels, declared shape is " +
                                            shape_to_string(*image_shape));
        shape = *image_shape;
    } else {
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(per_image))));
        shape = side * side == per_image ? Shape{1, side, side} : Shape{1, 1, per_image};
    }
    Shape full{labels.size()};
    full.insert(full.end(), shape.begin(), shape.end());

    Dataset ds;
    ds.images = Tensor(full, std::move(pixels));
    ds.labels = std::move(labels);
    ds.num_classes = count_classes(ds.labels);
    ds.split = "all";
    return ds;
}

Dataset take(const Dataset& dataset, std::span<const std::size_t> indices) {
    const Shape img = dataset.image_shape();
    const std::size_t per = shape_size(img);
    std::vector<double> data;
    data.reserve(indices.size() * per);
    Dataset out;
    for (std::size_t i : indices) {
        if (i >= dataset.size()) fail(ErrorCode::TooLarge, "index " + std::to_string(i) + " out of range");
        const auto row = dataset.image(i);
        data.insert(data.end(), row.begin(), row.end());
        out.labels.push_back(dataset.labels[i]);
    }
    Shape full{indices.size()};
    full.insert(full.end(), img.begin(), img.end());
    out.images = Tensor(full, std::move(data));
    out.num_classes = dataset.num_classes;
    out.split = dataset.split;
    return out;
}

std::vector<std::size_t> sample_indices(const Dataset& dataset, std::size_t n, std::uint64_t seed, bool stratified) {
    const std::size_t total = dataset.size();
    if (n > total)
        fail(ErrorCode::TooLarge, "requested " + std::to_string(n) + " samples from " + std::to_string(total));

    Rng rng(seed);
    auto partial_shuffle = [&rng](std::vector<std::size_t>& v, std::size_t k) {
        for (std::size_t i = 0; i < k; ++i) std::swap(v[i], v[i + rng.below(v.size() - i)]);
        v.resize(k);
    };

    std::vector<std::size_t> chosen;
    if (!stratified) {
        chosen.resize(total);
        std::iota(chosen.begin(), chosen.end(), 0);
        partial_shuffle(chosen, n);
    } else {
        std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
        for (std::size_t i = 0; i < total; ++i) by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);

        // Largest-remainder allocation of n across classes.
        std::vector<std::size_t> quota(by_class.size());
        std::vector<std::pair<double, std::size_t>> remainders;
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            const double exact = static_cast<double>(n) * static_cast<double>(by_class[c].size()) / static_cast<double>(total);
            quota[c] = static_cast<std::size_t>(std::floor(exact));
            assigned += quota[c];
            remainders.emplace_back(exact - std::floor(exact), c);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++quota[remainders[k % remainders.size()].second];

        for (std::size_t c = 0; c < by_class.size(); ++c) {
            partial_shuffle(by_class[c], std::min(quota[c], by_class[c].size()));
            chosen.insert(chosen.end(), by_class[c].begin(), by_class[c].end());
        }
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

Dataset subset(const Dataset& dataset, std::size_t n, std::uint64_t seed, bool stratified) {
    const auto idx = sample_indices(dataset, n, seed, stratified);
    return take(dataset, idx);
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, std::size_t first_size, std::uint64_t seed, bool stratified) {
    const auto first = sample_indices(dataset, first_size, seed, stratified);
    std::vector<std::size_t> rest;
    std::size_t k = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (k < first.size() && first[k] == i) {
            ++k;
        } else {
            rest.push_back(i);
        }
    }
    return {take(dataset, first), take(dataset, rest)};
}

std::filesystem::path data_dir(const std::filesystem::path& fallback) {
    if (const char* env = std::getenv("ADVARTIFACT_DATA_DIR"); env && *env) return env;
    return fallback;
}

}  // namespace advdet

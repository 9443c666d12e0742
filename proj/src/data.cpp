#include "dlgn/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "dlgn/bytes.hpp"

namespace dlgn {

BitMatrix::BitMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), words_((cols + 63) / 64), data_(rows * words_, 0) {}

BitMatrix BitMatrix::from_bytes(const Matrix<std::uint8_t>& m) {
    BitMatrix b(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (m(r, c) > 1) throw std::invalid_argument("BitMatrix: entries must be 0 or 1");
            if (m(r, c)) b.set(r, c, true);
        }
    }
    return b;
}

Matrix<std::uint8_t> BitMatrix::to_bytes() const {
    Matrix<std::uint8_t> m(rows_, cols_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) m(r, c) = get(r, c);
    }
    return m;
}

void BitMatrix::copy_row(std::size_t to, const BitMatrix& src, std::size_t from) {
    if (src.cols_ != cols_) throw std::invalid_argument("BitMatrix::copy_row: column mismatch");
    std::copy_n(src.data_.begin() + from * words_, words_, data_.begin() + to * words_);
}

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

const std::vector<std::uint32_t>& BinaryDataset::indices(Split s) const {
    switch (s) {
        case Split::Train: return splits.train;
        case Split::Val: return splits.val;
        case Split::Test: return splits.test;
    }
    throw std::invalid_argument("unknown split");
}

void BinaryDataset::validate() const {
    if (labels.size() != bits.rows()) throw std::invalid_argument("dataset: label count != sample count");
    if (num_classes == 0) throw std::invalid_argument("dataset: no classes");
    for (auto l : labels) {
        if (l >= num_classes) throw std::invalid_argument("dataset: label " + std::to_string(l) + " out of range");
    }
    if (real && (real->rows() != bits.rows() || real->cols() != bits.cols())) {
        throw std::invalid_argument("dataset: real-valued copy has the wrong shape");
    }
    if (!label_map.empty() && label_map.size() != num_classes) {
        throw std::invalid_argument("dataset: label map size != class count");
    }
    std::vector<std::uint8_t> seen(size(), 0);
    for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
        for (auto i : *part) {
            if (i >= size()) throw std::invalid_argument("dataset: split index out of range");
            if (seen[i]++) throw std::invalid_argument("dataset: splits overlap at sample " + std::to_string(i));
        }
    }
}

void SyntheticSpec::validate() const {
    if (num_classes < 2) throw std::invalid_argument("synthetic: num_classes must be >= 2");
    if (dim == 0) throw std::invalid_argument("synthetic: dim must be >= 1");
    if (fixed_bits_min == 0 || fixed_bits_min > fixed_bits_max || fixed_bits_max > dim) {
        throw std::invalid_argument("synthetic: need 0 < fixed_bits_min <= fixed_bits_max <= dim");
    }
    if (samples_per_class == 0) throw std::invalid_argument("synthetic: samples_per_class must be >= 1");
    if (!(test_fraction >= 0 && test_fraction < 1)) throw std::invalid_argument("synthetic: test_fraction must be in [0, 1)");
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    SyntheticDataset out;
    auto& ds = out.data;
    const std::size_t n = spec.num_classes * spec.samples_per_class;
    ds.bits = BitMatrix(n, spec.dim);
    ds.labels.resize(n);
    ds.num_classes = spec.num_classes;
    const std::size_t n_test =
        static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(spec.samples_per_class)));

    const std::size_t words = ds.bits.words_per_row();
    const std::uint64_t tail_mask =
        spec.dim % 64 == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << (spec.dim % 64)) - 1;
    std::vector<std::uint32_t> pool(spec.dim);
    std::uniform_int_distribution<std::size_t> count_dist(spec.fixed_bits_min, spec.fixed_bits_max);

    std::size_t row = 0;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        ClassSignature sig;
        const std::size_t f = count_dist(rng);
        std::iota(pool.begin(), pool.end(), 0u);
        for (std::size_t i = 0; i < f; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, spec.dim - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        sig.positions.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(f));
        std::sort(sig.positions.begin(), sig.positions.end());
        sig.values.resize(f);
        for (auto& v : sig.values) v = static_cast<std::uint8_t>(rng() & 1);

        for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++row) {
            auto w = ds.bits.row_words(row);
            for (std::size_t i = 0; i < words; ++i) w[i] = rng();
            w[words - 1] &= tail_mask;
            for (std::size_t i = 0; i < f; ++i) ds.bits.set(row, sig.positions[i], sig.values[i] != 0);
            ds.labels[row] = static_cast<std::uint32_t>(c);
            auto& split = s + n_test < spec.samples_per_class ? ds.splits.train : ds.splits.test;
            split.push_back(static_cast<std::uint32_t>(row));
        }
        out.classes.push_back(std::move(sig));
    }
    std::ostringstream prov;
    prov << "synthetic(classes=" << spec.num_classes << ",dim=" << spec.dim << ",fixed=" << spec.fixed_bits_min
         << ".." << spec.fixed_bits_max << ",per_class=" << spec.samples_per_class << ",seed=" << spec.seed << ")";
    ds.provenance = prov.str();
    return out;
}

std::string signatures_json(const SyntheticSpec& spec, const std::vector<ClassSignature>& classes) {
    nlohmann::json j;
    j["num_classes"] = spec.num_classes;
    j["dim"] = spec.dim;
    j["fixed_bits_min"] = spec.fixed_bits_min;
    j["fixed_bits_max"] = spec.fixed_bits_max;
    j["samples_per_class"] = spec.samples_per_class;
    j["seed"] = spec.seed;
    auto& arr = j["classes"] = nlohmann::json::array();
    for (std::size_t c = 0; c < classes.size(); ++c) {
        arr.push_back({{"class", c}, {"positions", classes[c].positions}, {"values", classes[c].values}});
    }
    return j.dump(1);
}

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw FormatError("idx: truncated header");
    if (bytes[0] != 0 || bytes[1] != 0) throw FormatError("idx: bad magic");
    if (bytes[2] != 0x08) throw FormatError("idx: unsupported element type (only unsigned byte)");
    const std::size_t rank = bytes[3];
    if (rank == 0) throw FormatError("idx: rank 0");
    if (bytes.size() < 4 + 4 * rank) throw FormatError("idx: truncated dimensions");
    IdxTensor t;
    std::size_t total = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        const auto* p = &bytes[4 + 4 * i];
        const std::uint32_t d = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                                (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
        t.dims.push_back(d);
        total *= d;
    }
    const std::size_t header = 4 + 4 * rank;
    if (bytes.size() - header < total) {
        throw FormatError("idx: truncated payload (" + std::to_string(bytes.size() - header) + " of " +
                          std::to_string(total) + " bytes)");
    }
    if (bytes.size() - header > total) throw FormatError("idx: trailing bytes after payload");
    t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return t;
}

std::vector<std::uint8_t> encode_idx(const IdxTensor& t) {
    std::size_t total = 1;
    for (auto d : t.dims) total *= d;
    if (t.dims.empty() || t.dims.size() > 255 || total != t.data.size()) {
        throw std::invalid_argument("encode_idx: dims do not match payload");
    }
    std::vector<std::uint8_t> out = {0, 0, 0x08, static_cast<std::uint8_t>(t.dims.size())};
    for (auto d : t.dims) {
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(d >> s));
    }
    out.insert(out.end(), t.data.begin(), t.data.end());
    return out;
}

LabeledImages load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const IdxTensor img = parse_idx(read_file(images));
    const IdxTensor lab = parse_idx(read_file(labels));
    if (img.dims.size() < 2) throw FormatError("idx: image file must have rank >= 2");
    if (lab.dims.size() != 1) throw FormatError("idx: label file must have rank 1");
    if (img.dims[0] != lab.dims[0]) {
        throw FormatError("idx: " + std::to_string(img.dims[0]) + " images but " +
                          std::to_string(lab.dims[0]) + " labels");
    }
    LabeledImages out;
    out.image_shape.assign(img.dims.begin() + 1, img.dims.end());
    const std::size_t n = img.dims[0];
    const std::size_t d = n == 0 ? 0 : img.data.size() / n;
    std::vector<float> px(img.data.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(img.data[i]) / 255.0f;
    out.pixels = Matrix<float>(n, d, std::move(px));
    out.labels.assign(lab.data.begin(), lab.data.end());
    return out;
}

std::vector<std::uint8_t> binarize(std::span<const float> x, float threshold) {
    std::vector<std::uint8_t> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > threshold ? 1 : 0;
    return out;
}

std::vector<std::uint8_t> threshold_expand(std::span<const float> x) {
    if (x.size() != kRgbLength) {
        throw std::invalid_argument("threshold_expand: expected " + std::to_string(kRgbLength) +
                                    " values, got " + std::to_string(x.size()));
    }
    std::vector<std::uint8_t> out;
    out.reserve(3 * x.size());
    for (const float t : {0.25f, 0.5f, 0.75f}) {
        for (float v : x) out.push_back(v > t ? 1 : 0);
    }
    return out;
}

BinaryDataset dataset_from_images(const LabeledImages& train, const LabeledImages& test,
                                  std::size_t num_classes, const std::string& name) {
    if (train.pixels.cols() != test.pixels.cols()) throw std::invalid_argument("train/test image sizes differ");
    const std::size_t n_train = train.pixels.rows();
    const std::size_t n = n_train + test.pixels.rows();
    const std::size_t d = train.pixels.cols();
    BinaryDataset ds;
    ds.bits = BitMatrix(n, d);
    Matrix<float> real(n, d);
    ds.labels.reserve(n);
    ds.num_classes = num_classes;
    for (std::size_t r = 0; r < n; ++r) {
        const auto& src = r < n_train ? train : test;
        const std::size_t i = r < n_train ? r : r - n_train;
        const auto row = src.pixels.row(i);
        std::copy(row.begin(), row.end(), real.row(r).begin());
        for (std::size_t c = 0; c < d; ++c) {
            if (row[c] > 0.5f) ds.bits.set(r, c, true);
        }
        ds.labels.push_back(src.labels[i]);
        (r < n_train ? ds.splits.train : ds.splits.test).push_back(static_cast<std::uint32_t>(r));
    }
    ds.real = std::move(real);
    ds.provenance = name + "(binarize>0.5)";
    ds.validate();
    return ds;
}

void make_validation_split(BinaryDataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0 && fraction < 1)) throw std::invalid_argument("validation fraction must be in [0, 1)");
    std::vector<std::uint32_t> pool = ds.splits.train;
    std::mt19937_64 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool.size())));
    ds.splits.val.insert(ds.splits.val.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
    ds.splits.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_val), pool.end());
    std::sort(ds.splits.val.begin(), ds.splits.val.end());
    std::sort(ds.splits.train.begin(), ds.splits.train.end());
}

BinaryDataset concat_datasets(const std::vector<BinaryDataset>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_datasets: nothing to concatenate");
    const std::size_t d = parts.front().dim();
    std::size_t n = 0;
    bool all_real = true;
    for (const auto& p : parts) {
        if (p.dim() != d) {
            throw std::invalid_argument("concat_datasets: sample dimension " + std::to_string(p.dim()) +
                                        " != " + std::to_string(d));
        }
        n += p.size();
        all_real &= p.real.has_value();
    }
    BinaryDataset out;
    out.bits = BitMatrix(n, d);
    if (all_real) out.real = Matrix<float>(n, d);
    std::string prov = "concat(";
    std::size_t row_base = 0;
    std::uint32_t label_base = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const auto& p = parts[pi];
        for (std::size_t r = 0; r < p.size(); ++r) {
            out.bits.copy_row(row_base + r, p.bits, r);
            if (all_real) std::copy_n(p.real->row(r).begin(), d, out.real->row(row_base + r).begin());
            out.labels.push_back(p.labels[r] + label_base);
        }
        const auto shift = [&](const std::vector<std::uint32_t>& src, std::vector<std::uint32_t>& dst) {
            for (auto i : src) dst.push_back(static_cast<std::uint32_t>(i + row_base));
        };
        shift(p.splits.train, out.splits.train);
        shift(p.splits.val, out.splits.val);
        shift(p.splits.test, out.splits.test);
        for (std::uint32_t c = 0; c < p.num_classes; ++c) {
            out.label_map.push_back(p.label_map.empty() ? LabelOrigin{p.provenance, c} : p.label_map[c]);
        }
        prov += (pi ? "," : "") + p.provenance;
        row_base += p.size();
        label_base += static_cast<std::uint32_t>(p.num_classes);
    }
    out.num_classes = label_base;
    out.provenance = prov + ")";
    out.validate();
    return out;
}

BinaryDataset take_classes(const BinaryDataset& ds, std::size_t k) {
    if (k == 0 || k > ds.num_classes) {
        throw std::invalid_argument("take_classes: k=" + std::to_string(k) + " outside [1, " +
                                    std::to_string(ds.num_classes) + "]");
    }
    if (k == ds.num_classes) return ds;
    std::vector<std::int64_t> remap(ds.size(), -1);
    std::size_t n = 0;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        if (ds.labels[r] < k) remap[r] = static_cast<std::int64_t>(n++);
    }
    BinaryDataset out;
    out.bits = BitMatrix(n, ds.dim());
    if (ds.real) out.real = Matrix<float>(n, ds.dim());
    out.labels.reserve(n);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        if (remap[r] < 0) continue;
        const auto to = static_cast<std::size_t>(remap[r]);
        out.bits.copy_row(to, ds.bits, r);
        if (ds.real) std::copy_n(ds.real->row(r).begin(), ds.dim(), out.real->row(to).begin());
        out.labels.push_back(ds.labels[r]);
    }
    const auto filter = [&](const std::vector<std::uint32_t>& src, std::vector<std::uint32_t>& dst) {
        for (auto i : src) {
            if (remap[i] >= 0) dst.push_back(static_cast<std::uint32_t>(remap[i]));
        }
    };
    filter(ds.splits.train, out.splits.train);
    filter(ds.splits.val, out.splits.val);
    filter(ds.splits.test, out.splits.test);
    out.num_classes = k;
    if (!ds.label_map.empty()) out.label_map.assign(ds.label_map.begin(), ds.label_map.begin() + static_cast<std::ptrdiff_t>(k));
    out.provenance = ds.provenance + "|classes<" + std::to_string(k);
    return out;
}

Matrix<double> gather_inputs(const BinaryDataset& ds, std::span<const std::uint32_t> rows, bool continuous) {
    if (continuous && !ds.real) throw std::invalid_argument("dataset has no real-valued inputs");
    Matrix<double> x(rows.size(), ds.dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto dst = x.row(i);
        if (continuous) {
            const auto src = ds.real->row(rows[i]);
            std::copy(src.begin(), src.end(), dst.begin());
            continue;
        }
        const auto words = ds.bits.row_words(rows[i]);
        for (std::size_t c = 0; c < ds.dim(); ++c) dst[c] = static_cast<double>((words[c / 64] >> (c % 64)) & 1);
    }
    return x;
}

Matrix<std::uint8_t> gather_bits(const BinaryDataset& ds, std::span<const std::uint32_t> rows) {
    Matrix<std::uint8_t> x(rows.size(), ds.dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto words = ds.bits.row_words(rows[i]);
        auto dst = x.row(i);
        for (std::size_t c = 0; c < ds.dim(); ++c) dst[c] = static_cast<std::uint8_t>((words[c / 64] >> (c % 64)) & 1);
    }
    return x;
}

namespace {

constexpr char kDataMagic[8] = {'D', 'L', 'G', 'N', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kDataVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_dataset(const BinaryDataset& ds) {
    ds.validate();
    ByteWriter w;
    w.raw(std::span(reinterpret_cast<const std::uint8_t*>(kDataMagic), 8));
    w.u32(kDataVersion);
    w.u64(ds.size());
    w.u32(static_cast<std::uint32_t>(ds.dim()));
    w.u32(static_cast<std::uint32_t>(ds.num_classes));
    w.u32(static_cast<std::uint32_t>(ds.bits.words_per_row()));
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (auto word : ds.bits.row_words(r)) w.u64(word);
    }
    for (auto l : ds.labels) w.u32(l);
    for (const auto* part : {&ds.splits.train, &ds.splits.val, &ds.splits.test}) {
        w.u64(part->size());
        for (auto i : *part) w.u32(i);
    }
    w.str(ds.provenance);
    w.u32(static_cast<std::uint32_t>(ds.label_map.size()));
    for (const auto& lo : ds.label_map) {
        w.str(lo.source);
        w.u32(lo.source_label);
    }
    w.u8(ds.real ? 1 : 0);
    if (ds.real) {
        for (float v : ds.real->values()) w.f32(v);
    }
    w.u64(fnv1a(w.bytes()));
    return w.take();
}

BinaryDataset decode_dataset(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "dataset");
    const auto magic = r.raw(8);
    if (!std::equal(magic.begin(), magic.end(), kDataMagic)) r.fail("bad magic, not a DLGN dataset");
    if (const auto v = r.u32(); v != kDataVersion) r.fail("unsupported version " + std::to_string(v));
    const std::uint64_t n = r.u64();
    const std::uint32_t d = r.u32();
    BinaryDataset ds;
    ds.num_classes = r.u32();
    const std::uint32_t words = r.u32();
    if (words != (d + 63) / 64) r.fail("row word count does not match dimension");
    if (n * words * 8 > r.remaining()) r.fail("truncated sample payload");
    ds.bits = BitMatrix(n, d);
    for (std::size_t row = 0; row < n; ++row) {
        for (auto& word : ds.bits.row_words(row)) word = r.u64();
    }
    if (n * 4 > r.remaining()) r.fail("truncated labels");
    ds.labels.resize(n);
    for (auto& l : ds.labels) l = r.u32();
    for (auto* part : {&ds.splits.train, &ds.splits.val, &ds.splits.test}) {
        const std::uint64_t count = r.u64();
        if (count > n) r.fail("split larger than dataset");
        part->resize(count);
        for (auto& i : *part) i = r.u32();
    }
    ds.provenance = r.str();
    const std::uint32_t map_size = r.u32();
    if (map_size > ds.num_classes) r.fail("label map larger than class count");
    for (std::uint32_t i = 0; i < map_size; ++i) {
        LabelOrigin lo;
        lo.source = r.str();
        lo.source_label = r.u32();
        ds.label_map.push_back(std::move(lo));
    }
    if (r.u8()) {
        if (n * d * 4 > r.remaining()) r.fail("truncated real-valued payload");
        Matrix<float> real(n, d);
        for (auto& v : real.values()) v = r.f32();
        ds.real = std::move(real);
    }
    const std::size_t body = r.pos();
    const std::uint64_t stored = r.u64();
    if (r.remaining() != 0) r.fail("trailing bytes after checksum");
    if (fnv1a(bytes.first(body)) != stored) r.fail("checksum mismatch, file is corrupt");
    try {
        ds.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("dataset: ") + e.what());
    }
    return ds;
}

void save_dataset(const std::filesystem::path& path, const BinaryDataset& ds) {
    write_file(path, encode_dataset(ds));
}

BinaryDataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

namespace {

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += ch;
    }
    return q + "\"";
}

}  // namespace

std::string label_map_csv(const BinaryDataset& ds) {
    std::ostringstream os;
    os << "label,source,source_label\n";
    for (std::size_t c = 0; c < ds.num_classes; ++c) {
        if (ds.label_map.empty()) {
            os << c << ',' << csv_quote(ds.provenance) << ',' << c << '\n';
        } else {
            os << c << ',' << csv_quote(ds.label_map[c].source) << ',' << ds.label_map[c].source_label << '\n';
        }
    }
    return os.str();
}

}  // namespace dlgn

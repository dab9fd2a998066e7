#include "lossyrbm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace lossyrbm {

namespace {

constexpr std::uint64_t kTagFeatureMask = 11;
constexpr std::uint64_t kTagLabelMask = 12;
constexpr std::uint64_t kTagGroupMask = 13;
constexpr std::uint64_t kTagSplit = 14;
constexpr std::uint64_t kTagTestMask = 15;
constexpr std::uint64_t kTagSubsample = 16;

/// Selection sampling: exactly k of [0, population) in increasing order.
std::vector<std::size_t> choose_exact(std::size_t population, std::size_t k, Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(k);
    std::size_t remaining = k;
    for (std::size_t i = 0; i < population && remaining > 0; ++i) {
        if (uniform01(rng) * static_cast<double>(population - i) < static_cast<double>(remaining)) {
            out.push_back(i);
            --remaining;
        }
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            out.push_back(trim(cell));
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    out.push_back(trim(cell));
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto res = std::from_chars(first, s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    const auto offset = static_cast<long long>(in.tellg());
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw DataError(path + ": truncated IDX header at byte offset " + std::to_string(offset));
    }
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

struct IdxFile {
    std::vector<std::uint32_t> dims;
    std::vector<unsigned char> data;
};

IdxFile read_idx(const std::string& path, std::uint32_t expected_magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    const std::uint32_t magic = read_be32(in, path);
    if (magic != expected_magic) {
        std::ostringstream msg;
        msg << path << ": bad IDX magic 0x" << std::hex << magic << " at byte offset 0 (expected 0x" << expected_magic
            << ")";
        throw DataError(msg.str());
    }
    IdxFile f;
    const std::uint32_t n_dims = magic & 0xFFU;
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < n_dims; ++d) {
        f.dims.push_back(read_be32(in, path));
        total *= f.dims.back();
    }
    f.data.resize(total);
    const auto offset = static_cast<long long>(in.tellg());
    if (total > 0 && !in.read(reinterpret_cast<char*>(f.data.data()), static_cast<std::streamsize>(total))) {
        throw DataError(path + ": truncated IDX payload; expected " + std::to_string(total) +
                        " bytes starting at byte offset " + std::to_string(offset) + ", got " +
                        std::to_string(in.gcount()));
    }
    return f;
}

}  // namespace

FeatureStats FeatureStats::identity(std::size_t n) {
    const auto nn = static_cast<Eigen::Index>(n);
    return {Vector::Zero(nn), Vector::Ones(nn)};
}

double FeatureStats::to_original(std::size_t column, double stored) const {
    const auto c = static_cast<Eigen::Index>(column);
    return stored * scale(c) + mean(c);
}

double FeatureStats::to_stored(std::size_t column, double original) const {
    const auto c = static_cast<Eigen::Index>(column);
    return (original - mean(c)) / scale(c);
}

IncompleteDataset::IncompleteDataset(Matrix values, std::vector<VisibleUnitSpec> units, VisibleLayout layout,
                                     FeatureStats stats, std::vector<std::string> column_names)
    : values_(std::move(values)),
      observed_(MaskMatrix::Ones(values_.rows(), values_.cols())),
      units_(std::move(units)),
      layout_(std::move(layout)),
      stats_(std::move(stats)),
      names_(std::move(column_names)) {
    layout_.validate(n_visible(), units_);
    if (static_cast<std::size_t>(stats_.mean.size()) != n_visible() ||
        static_cast<std::size_t>(stats_.scale.size()) != n_visible()) {
        throw ShapeError("dataset: feature stats length mismatch");
    }
    if (!names_.empty() && names_.size() != n_visible()) throw ShapeError("dataset: column name count mismatch");
}

ObservedData IncompleteDataset::observed_view() const {
    ObservedData d{values_, observed_, units_, layout_};
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (Eigen::Index r = 0; r < d.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < d.values.cols(); ++c) {
            if (!observed_(r, c)) d.values(r, c) = nan;
        }
    }
    return d;
}

void IncompleteDataset::set_mask(MaskMatrix observed) {
    if (observed.rows() != values_.rows() || observed.cols() != values_.cols()) {
        throw ShapeError("dataset: mask shape mismatch");
    }
    observed_ = std::move(observed);
}

void IncompleteDataset::reset_mask() { observed_.setOnes(); }

IncompleteDataset IncompleteDataset::select_rows(const std::vector<std::size_t>& rows) const {
    IncompleteDataset out = *this;
    out.values_.resize(static_cast<Eigen::Index>(rows.size()), values_.cols());
    out.observed_.resize(static_cast<Eigen::Index>(rows.size()), values_.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= n_rows()) throw ShapeError("dataset: row index out of range");
        out.values_.row(static_cast<Eigen::Index>(k)) = values_.row(static_cast<Eigen::Index>(rows[k]));
        out.observed_.row(static_cast<Eigen::Index>(k)) = observed_.row(static_cast<Eigen::Index>(rows[k]));
    }
    return out;
}

void IncompleteDataset::restandardize(const std::vector<std::size_t>& stat_rows) {
    if (stat_rows.empty()) throw DataError("restandardize: no rows to compute statistics from");
    for (std::size_t c = 0; c < n_visible(); ++c) {
        if (units_[c].is_binary()) continue;
        const auto cc = static_cast<Eigen::Index>(c);
        for (Eigen::Index r = 0; r < values_.rows(); ++r) values_(r, cc) = stats_.to_original(c, values_(r, cc));
        double sum = 0.0;
        for (std::size_t r : stat_rows) sum += values_(static_cast<Eigen::Index>(r), cc);
        const double mean = sum / static_cast<double>(stat_rows.size());
        double ss = 0.0;
        for (std::size_t r : stat_rows) {
            const double d = values_(static_cast<Eigen::Index>(r), cc) - mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / static_cast<double>(stat_rows.size()));
        stats_.mean(cc) = mean;
        stats_.scale(cc) = sd > 0.0 ? sd : 1.0;
        for (Eigen::Index r = 0; r < values_.rows(); ++r) values_(r, cc) = stats_.to_stored(c, values_(r, cc));
    }
}

IncompleteDataset IncompleteDataset::with_poisoned_mask(double poison) const {
    IncompleteDataset out = *this;
    for (Eigen::Index r = 0; r < values_.rows(); ++r) {
        for (Eigen::Index c = 0; c < values_.cols(); ++c) {
            if (!observed_(r, c)) out.values_(r, c) = poison;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

IncompleteDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const IdxFile images = read_idx(images_path, 0x00000803);
    const IdxFile labels = read_idx(labels_path, 0x00000801);
    if (images.dims.size() != 3) throw DataError(images_path + ": expected 3 IDX dimensions");
    if (labels.dims.size() != 1) throw DataError(labels_path + ": expected 1 IDX dimension");
    const std::size_t n = images.dims[0];
    if (labels.dims[0] != n) throw DataError("MNIST image and label counts differ");
    const std::size_t n_pixels = std::size_t{images.dims[1]} * images.dims[2];
    constexpr std::size_t kClasses = 10;

    Matrix values = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_pixels + kClasses));
    for (std::size_t r = 0; r < n; ++r) {
        const auto rr = static_cast<Eigen::Index>(r);
        for (std::size_t p = 0; p < n_pixels; ++p) {
            values(rr, static_cast<Eigen::Index>(p)) = images.data[r * n_pixels + p] >= 128 ? 1.0 : 0.0;
        }
        const unsigned label = labels.data[r];
        if (label >= kClasses) {
            throw DataError(labels_path + ": label " + std::to_string(label) + " out of range at byte offset " +
                            std::to_string(8 + r));
        }
        values(rr, static_cast<Eigen::Index>(n_pixels + label)) = 1.0;
    }
    VisibleLayout layout;
    std::vector<std::string> names;
    for (std::size_t p = 0; p < n_pixels; ++p) {
        layout.features.push_back(p);
        names.push_back("px" + std::to_string(p));
    }
    layout.class_groups.emplace_back();
    for (std::size_t k = 0; k < kClasses; ++k) {
        layout.labels.push_back(n_pixels + k);
        layout.class_groups.back().push_back(n_pixels + k);
        names.push_back("digit=" + std::to_string(k));
    }
    return IncompleteDataset(std::move(values), std::vector<VisibleUnitSpec>(n_pixels + kClasses, VisibleUnitSpec::binary()),
                             std::move(layout), FeatureStats::identity(n_pixels + kClasses), std::move(names));
}

ColumnRole parse_role(const std::string& s) {
    if (s == "feature" || s == "gaussian") return ColumnRole::Feature;
    if (s == "binary" || s == "binary_feature") return ColumnRole::BinaryFeature;
    if (s == "label") return ColumnRole::Label;
    if (s == "class") return ColumnRole::Class;
    if (s == "ignore") return ColumnRole::Ignore;
    throw ConfigError("unknown column role '" + s + "'");
}

CsvSchema CsvSchema::parse(std::istream& in) {
    CsvSchema schema;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto sep = line.find_last_of(" \t=");
        if (sep == std::string::npos) throw ConfigError("schema line " + std::to_string(line_no) + ": expected '<column> <role>'");
        std::string name = trim(std::string_view(line).substr(0, sep));
        if (!name.empty() && name.back() == '=') name = trim(std::string_view(name).substr(0, name.size() - 1));
        const ColumnRole role = parse_role(trim(std::string_view(line).substr(sep + 1)));
        if (name == "*") {
            schema.default_role = role;
        } else {
            schema.columns.emplace_back(std::move(name), role);
        }
    }
    return schema;
}

CsvSchema CsvSchema::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open schema " + path);
    return parse(in);
}

IncompleteDataset load_csv(std::istream& in, const CsvSchema& schema) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("csv: missing header row");
    const std::vector<std::string> header = split_csv_line(line);

    std::map<std::string, ColumnRole> declared(schema.columns.begin(), schema.columns.end());
    for (const auto& [name, role] : schema.columns) {
        if (std::find(header.begin(), header.end(), name) == header.end()) {
            throw DataError("csv: schema column '" + name + "' not present in header");
        }
    }
    std::vector<ColumnRole> roles;
    for (const auto& h : header) {
        if (auto it = declared.find(h); it != declared.end()) {
            roles.push_back(it->second);
        } else if (schema.default_role) {
            roles.push_back(*schema.default_role);
        } else {
            throw DataError("csv: column '" + h + "' has no role in the schema");
        }
    }

    std::vector<std::vector<std::string>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw DataError("csv: row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(header.size()));
        }
        rows.push_back(std::move(cells));
    }
    const std::size_t n = rows.size();

    // Column plan.
    std::vector<std::size_t> feature_cols, label_cols, class_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        switch (roles[c]) {
            case ColumnRole::Feature:
            case ColumnRole::BinaryFeature: feature_cols.push_back(c); break;
            case ColumnRole::Label: label_cols.push_back(c); break;
            case ColumnRole::Class: class_cols.push_back(c); break;
            case ColumnRole::Ignore: break;
        }
    }
    auto cell_error = [&](std::size_t r, std::size_t c, const std::string& what) {
        return DataError("csv: row " + std::to_string(r + 2) + ", column '" + header[c] + "': " + what);
    };

    // Distinct values per class column, numeric order when all numeric.
    std::vector<std::vector<std::string>> class_values;
    for (std::size_t c : class_cols) {
        std::set<std::string> distinct;
        for (const auto& row : rows) distinct.insert(row[c]);
        std::vector<std::string> vals(distinct.begin(), distinct.end());
        const bool numeric = std::all_of(vals.begin(), vals.end(), [](const std::string& s) {
            double d;
            return parse_double(s, d);
        });
        if (numeric) {
            std::sort(vals.begin(), vals.end(), [](const std::string& a, const std::string& b) {
                double x, y;
                parse_double(a, x);
                parse_double(b, y);
                return x < y;
            });
        }
        class_values.push_back(std::move(vals));
    }

    std::size_t width = feature_cols.size() + label_cols.size();
    for (const auto& v : class_values) width += v.size();
    Matrix values = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
    std::vector<VisibleUnitSpec> units;
    std::vector<std::string> names;
    VisibleLayout layout;

    std::size_t col = 0;
    for (std::size_t c : feature_cols) {
        const bool binary = roles[c] == ColumnRole::BinaryFeature;
        for (std::size_t r = 0; r < n; ++r) {
            double x;
            if (!parse_double(rows[r][c], x) || !std::isfinite(x)) throw cell_error(r, c, "non-numeric value '" + rows[r][c] + "'");
            if (binary && x != 0.0 && x != 1.0) throw cell_error(r, c, "binary feature outside {0,1}");
            values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) = x;
        }
        units.push_back(binary ? VisibleUnitSpec::binary() : VisibleUnitSpec::gaussian());
        layout.features.push_back(col);
        names.push_back(header[c]);
        ++col;
    }
    for (std::size_t c : label_cols) {
        for (std::size_t r = 0; r < n; ++r) {
            double x;
            if (!parse_double(rows[r][c], x)) throw cell_error(r, c, "non-numeric value '" + rows[r][c] + "'");
            if (x != 0.0 && x != 1.0) throw cell_error(r, c, "label value outside {0,1}");
            values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) = x;
        }
        units.push_back(VisibleUnitSpec::binary());
        layout.labels.push_back(col);
        names.push_back(header[c]);
        ++col;
    }
    for (std::size_t k = 0; k < class_cols.size(); ++k) {
        const std::size_t c = class_cols[k];
        const auto& vals = class_values[k];
        std::vector<std::size_t> group;
        for (std::size_t v = 0; v < vals.size(); ++v) {
            group.push_back(col + v);
            layout.labels.push_back(col + v);
            units.push_back(VisibleUnitSpec::binary());
            names.push_back(header[c] + "=" + vals[v]);
        }
        for (std::size_t r = 0; r < n; ++r) {
            const auto it = std::find(vals.begin(), vals.end(), rows[r][c]);
            values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col + static_cast<std::size_t>(it - vals.begin()))) = 1.0;
        }
        layout.class_groups.push_back(std::move(group));
        col += vals.size();
    }

    IncompleteDataset ds(std::move(values), std::move(units), std::move(layout), FeatureStats::identity(width),
                         std::move(names));
    if (n > 0) {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        ds.restandardize(all);
    }
    return ds;
}

IncompleteDataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return load_csv(in, schema);
}

// ---------------------------------------------------------------------------

void MaskSpec::validate() const {
    if (!(q_fea >= 0.0 && q_fea <= 1.0)) throw ConfigError("q_fea must be in [0,1]");
    if (!(q_label >= 0.0 && q_label <= 1.0)) throw ConfigError("q_label must be in [0,1]");
}

std::size_t masked_count(double rate, std::size_t population) {
    return static_cast<std::size_t>(std::llround(rate * static_cast<double>(population)));
}

IncompleteDataset apply_mask(const IncompleteDataset& dataset, const MaskSpec& spec) {
    spec.validate();
    IncompleteDataset out = dataset;
    MaskMatrix observed = MaskMatrix::Ones(static_cast<Eigen::Index>(dataset.n_rows()),
                                           static_cast<Eigen::Index>(dataset.n_visible()));
    const std::size_t n = dataset.n_rows();
    const auto& layout = dataset.layout();

    auto mask_cells = [&](const std::vector<std::size_t>& columns, double rate, std::uint64_t tag) {
        if (columns.empty()) return;
        const std::size_t population = n * columns.size();
        Rng rng(derive_seed(spec.seed, {tag}));
        for (std::size_t cell : choose_exact(population, masked_count(rate, population), rng)) {
            observed(static_cast<Eigen::Index>(cell / columns.size()),
                     static_cast<Eigen::Index>(columns[cell % columns.size()])) = 0;
        }
    };
    mask_cells(layout.features, spec.q_fea, kTagFeatureMask);
    mask_cells(layout.free_labels(), spec.q_label, kTagLabelMask);
    for (std::size_t g = 0; g < layout.class_groups.size(); ++g) {
        Rng rng(derive_seed(spec.seed, {kTagGroupMask, g}));
        for (std::size_t r : choose_exact(n, masked_count(spec.q_label, n), rng)) {
            for (std::size_t c : layout.class_groups[g]) {
                observed(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = 0;
            }
        }
    }
    out.set_mask(std::move(observed));
    return out;
}

InductiveSplit split_inductive(const IncompleteDataset& dataset, double train_fraction, double q_fea,
                               std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0,1)");
    if (!(q_fea >= 0.0 && q_fea <= 1.0)) throw ConfigError("q_fea must be in [0,1]");
    const std::size_t n = dataset.n_rows();
    Rng rng(derive_seed(seed, {kTagSplit}));
    std::vector<std::size_t> train_rows = choose_exact(n, masked_count(train_fraction, n), rng);
    std::vector<std::size_t> test_rows;
    for (std::size_t r = 0, k = 0; r < n; ++r) {
        if (k < train_rows.size() && train_rows[k] == r) {
            ++k;
        } else {
            test_rows.push_back(r);
        }
    }

    IncompleteDataset base = dataset;
    base.reset_mask();
    base.restandardize(train_rows);

    InductiveSplit split{base.select_rows(train_rows), base.select_rows(test_rows), train_rows, test_rows};

    const auto& layout = base.layout();
    MaskMatrix test_mask = MaskMatrix::Ones(static_cast<Eigen::Index>(test_rows.size()),
                                            static_cast<Eigen::Index>(base.n_visible()));
    for (std::size_t l : layout.labels) test_mask.col(static_cast<Eigen::Index>(l)).setZero();
    if (!layout.features.empty()) {
        const std::size_t population = test_rows.size() * layout.features.size();
        Rng mask_rng(derive_seed(seed, {kTagTestMask}));
        for (std::size_t cell : choose_exact(population, masked_count(q_fea, population), mask_rng)) {
            test_mask(static_cast<Eigen::Index>(cell / layout.features.size()),
                      static_cast<Eigen::Index>(layout.features[cell % layout.features.size()])) = 0;
        }
    }
    split.test.set_mask(std::move(test_mask));
    return split;
}

IncompleteDataset subsample(const IncompleteDataset& dataset, std::size_t n, std::uint64_t seed) {
    if (n >= dataset.n_rows()) return dataset;
    Rng rng(derive_seed(seed, {kTagSubsample}));
    const std::vector<std::size_t> rows = choose_exact(dataset.n_rows(), n, rng);
    IncompleteDataset out = dataset.select_rows(rows);
    std::vector<std::size_t> all(rows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    out.restandardize(all);
    return out;
}

void export_mask(std::ostream& out, const MaskMatrix& observed) {
    out << "row,column\n";
    for (Eigen::Index r = 0; r < observed.rows(); ++r) {
        for (Eigen::Index c = 0; c < observed.cols(); ++c) {
            if (!observed(r, c)) out << r << ',' << c << '\n';
        }
    }
}

MaskMatrix import_mask(std::istream& in, std::size_t n_rows, std::size_t n_cols) {
    MaskMatrix observed = MaskMatrix::Ones(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_cols));
    std::string line;
    if (!std::getline(in, line) || trim(line) != "row,column") throw DataError("mask file: missing 'row,column' header");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        double r = -1, c = -1;
        if (cells.size() != 2 || !parse_double(cells[0], r) || !parse_double(cells[1], c) || r < 0 || c < 0 ||
            r >= static_cast<double>(n_rows) || c >= static_cast<double>(n_cols) || r != std::floor(r) ||
            c != std::floor(c)) {
            throw DataError("mask file: bad coordinate on line " + std::to_string(line_no));
        }
        observed(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = 0;
    }
    return observed;
}

}  // namespace lossyrbm

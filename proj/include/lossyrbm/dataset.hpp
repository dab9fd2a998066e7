#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lossyrbm/observation.hpp"
#include "lossyrbm/rbm_model.hpp"

namespace lossyrbm {

/// Per-column affine standardization: stored = (original - mean) / scale.
/// Binary and label columns carry mean 0, scale 1.
struct FeatureStats {
    Vector mean;
    Vector scale;

    static FeatureStats identity(std::size_t n);
    double to_original(std::size_t column, double stored) const;
    double to_stored(std::size_t column, double original) const;
};

/// Full data matrix plus observation mask. Masked cells keep their ground
/// truth, reachable only through ground_truth(); training and imputation
/// receive observed_view(), which blanks them.
class IncompleteDataset {
public:
    IncompleteDataset() = default;
    IncompleteDataset(Matrix values, std::vector<VisibleUnitSpec> units, VisibleLayout layout, FeatureStats stats,
                      std::vector<std::string> column_names = {});

    std::size_t n_rows() const { return static_cast<std::size_t>(values_.rows()); }
    std::size_t n_visible() const { return static_cast<std::size_t>(values_.cols()); }

    const std::vector<VisibleUnitSpec>& units() const { return units_; }
    const VisibleLayout& layout() const { return layout_; }
    const FeatureStats& stats() const { return stats_; }
    const std::vector<std::string>& column_names() const { return names_; }
    const MaskMatrix& observed() const { return observed_; }

    /// Ground truth in stored (standardized) units. For scoring only.
    const Matrix& ground_truth() const { return values_; }

    ObservedData observed_view() const;

    /// Replaces the observation mask (shape-checked).
    void set_mask(MaskMatrix observed);
    void reset_mask();

    /// Copy of the listed rows, mask included.
    IncompleteDataset select_rows(const std::vector<std::size_t>& rows) const;

    /// Recomputes Gaussian-feature standardization from the listed rows and
    /// rewrites all rows with it. Constant columns get scale 1.
    void restandardize(const std::vector<std::size_t>& stat_rows);

    /// Copy with the ground truth of masked cells overwritten by `poison`.
    /// Used to prove that downstream stages never read masked cells.
    IncompleteDataset with_poisoned_mask(double poison) const;

private:
    Matrix values_;
    MaskMatrix observed_;
    std::vector<VisibleUnitSpec> units_;
    VisibleLayout layout_;
    FeatureStats stats_;
    std::vector<std::string> names_;
};

/// MNIST IDX pair: pixels binarized at byte >= 128, labels one-hot into one class group of 10.
IncompleteDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

enum class ColumnRole { Feature, BinaryFeature, Label, Class, Ignore };

/// Column roles for CSV ingestion. Columns not listed take `default_role`
/// when one is set, otherwise ingestion fails.
struct CsvSchema {
    std::vector<std::pair<std::string, ColumnRole>> columns;
    std::optional<ColumnRole> default_role;

    /// Text format: one `<column> <role>` pair per line, `#` comments,
    /// `*` as the column name sets the default role.
    static CsvSchema parse(std::istream& in);
    static CsvSchema load(const std::string& path);
};

ColumnRole parse_role(const std::string& s);

/// Visible order: features (file order), free labels, then one class group per class column.
IncompleteDataset load_csv(std::istream& in, const CsvSchema& schema);
IncompleteDataset load_csv(const std::string& path, const CsvSchema& schema);

struct MaskSpec {
    double q_fea = 0.0;
    double q_label = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Exact-count MCAR mask. The previous mask is discarded. Features: round(q_fea * n * |V_f|)
/// cells. Free labels: round(q_label * n * |free|) cells. Class groups: round(q_label * n)
/// whole instances per group.
IncompleteDataset apply_mask(const IncompleteDataset& dataset, const MaskSpec& spec);

/// Number of cells the exact-count rule hides out of `population`.
std::size_t masked_count(double rate, std::size_t population);

struct InductiveSplit {
    IncompleteDataset train;
    IncompleteDataset test;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
};

/// Random row split. Train comes back fully observed; test has every label
/// masked and round(q_fea * n_test * |V_f|) feature cells masked. Gaussian
/// features are restandardized with train-only statistics.
InductiveSplit split_inductive(const IncompleteDataset& dataset, double train_fraction, double q_fea,
                               std::uint64_t seed);

/// Random subset of `n` rows (original order kept), restandardized on the subset.
IncompleteDataset subsample(const IncompleteDataset& dataset, std::size_t n, std::uint64_t seed);

/// Mask exchange format: header `row,column`, one masked coordinate per line.
void export_mask(std::ostream& out, const MaskMatrix& observed);
MaskMatrix import_mask(std::istream& in, std::size_t n_rows, std::size_t n_cols);

}  // namespace lossyrbm

#include "lossyrbm/rbm_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace lossyrbm {

std::vector<std::size_t> VisibleLayout::free_labels() const {
    std::vector<std::size_t> grouped;
    for (const auto& g : class_groups) {
        grouped.insert(grouped.end(), g.begin(), g.end());
    }
    std::sort(grouped.begin(), grouped.end());
    std::vector<std::size_t> out;
    for (std::size_t l : labels) {
        if (!std::binary_search(grouped.begin(), grouped.end(), l)) {
            out.push_back(l);
        }
    }
    return out;
}

void VisibleLayout::validate(std::size_t n_visible, const std::vector<VisibleUnitSpec>& units) const {
    if (units.size() != n_visible) {
        throw ShapeError("layout: unit spec count does not match visible size");
    }
    std::vector<int> role(n_visible, 0);
    for (std::size_t i : features) {
        if (i >= n_visible) throw ShapeError("layout: feature index out of range");
        if (role[i] != 0) throw ShapeError("layout: unit " + std::to_string(i) + " assigned twice");
        role[i] = 1;
    }
    for (std::size_t i : labels) {
        if (i >= n_visible) throw ShapeError("layout: label index out of range");
        if (role[i] != 0) throw ShapeError("layout: unit " + std::to_string(i) + " assigned twice");
        if (!units[i].is_binary()) throw ShapeError("layout: label unit " + std::to_string(i) + " is not binary");
        role[i] = 2;
    }
    if (std::find(role.begin(), role.end(), 0) != role.end()) {
        throw ShapeError("layout: features and labels do not cover the visible layer");
    }
    std::vector<bool> grouped(n_visible, false);
    for (const auto& g : class_groups) {
        if (g.empty()) throw ShapeError("layout: empty class group");
        for (std::size_t i : g) {
            if (i >= n_visible || role[i] != 2) throw ShapeError("layout: class group member is not a label unit");
            if (grouped[i]) throw ShapeError("layout: class groups overlap");
            grouped[i] = true;
        }
    }
    for (const auto& u : units) {
        if (!u.is_binary() && !(u.sigma_sq > 0.0 && std::isfinite(u.sigma_sq))) {
            throw ShapeError("layout: Gaussian unit needs a positive finite variance");
        }
    }
}

VisibleLayout VisibleLayout::features_only(std::size_t n_visible) {
    VisibleLayout layout;
    layout.features.resize(n_visible);
    for (std::size_t i = 0; i < n_visible; ++i) layout.features[i] = i;
    return layout;
}

RbmModel::RbmModel(std::vector<VisibleUnitSpec> units, VisibleLayout layout, std::size_t n_hidden)
    : weights_(Matrix::Zero(static_cast<Eigen::Index>(units.size()), static_cast<Eigen::Index>(n_hidden))),
      visible_bias_(Vector::Zero(static_cast<Eigen::Index>(units.size()))),
      hidden_bias_(Vector::Zero(static_cast<Eigen::Index>(n_hidden))),
      units_(std::move(units)),
      layout_(std::move(layout)) {
    layout_.validate(units_.size(), units_);
}

RbmModel RbmModel::binary(std::size_t n_visible, std::size_t n_hidden) {
    return RbmModel(std::vector<VisibleUnitSpec>(n_visible, VisibleUnitSpec::binary()),
                    VisibleLayout::features_only(n_visible), n_hidden);
}

bool RbmModel::all_binary() const {
    return std::all_of(units_.begin(), units_.end(), [](const VisibleUnitSpec& u) { return u.is_binary(); });
}

bool RbmModel::is_finite() const {
    return weights_.allFinite() && visible_bias_.allFinite() && hidden_bias_.allFinite();
}

void RbmModel::check_finite() const {
    if (is_finite()) return;
    for (Eigen::Index i = 0; i < weights_.rows(); ++i) {
        for (Eigen::Index j = 0; j < weights_.cols(); ++j) {
            if (!std::isfinite(weights_(i, j))) {
                throw NumericError("non-finite weight w[" + std::to_string(i) + "," + std::to_string(j) + "]");
            }
        }
    }
    for (Eigen::Index i = 0; i < visible_bias_.size(); ++i) {
        if (!std::isfinite(visible_bias_(i))) throw NumericError("non-finite visible bias a[" + std::to_string(i) + "]");
    }
    for (Eigen::Index j = 0; j < hidden_bias_.size(); ++j) {
        if (!std::isfinite(hidden_bias_(j))) throw NumericError("non-finite hidden bias b[" + std::to_string(j) + "]");
    }
}

double RbmModel::parameter_norm() const {
    return std::sqrt(weights_.squaredNorm() + visible_bias_.squaredNorm() + hidden_bias_.squaredNorm());
}

bool RbmModel::operator==(const RbmModel& other) const {
    return n_visible() == other.n_visible() && n_hidden() == other.n_hidden() && units_ == other.units_ &&
           layout_ == other.layout_ && weights_ == other.weights_ && visible_bias_ == other.visible_bias_ &&
           hidden_bias_ == other.hidden_bias_;
}

// ---------------------------------------------------------------------------
// Serialization. Little-endian fixed-width fields throughout.

namespace {

constexpr char kMagic[8] = {'L', 'R', 'B', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t x) {
    unsigned char buf[8];
    for (int k = 0; k < 8; ++k) buf[k] = static_cast<unsigned char>(x >> (8 * k));
    out.write(reinterpret_cast<const char*>(buf), 8);
}

void put_f64(std::ostream& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }

std::uint64_t get_u64(std::istream& in) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), 8)) {
        throw DataError("model file truncated at byte " + std::to_string(static_cast<long long>(in.tellg())));
    }
    std::uint64_t x = 0;
    for (int k = 0; k < 8; ++k) x |= static_cast<std::uint64_t>(buf[k]) << (8 * k);
    return x;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

void put_indices(std::ostream& out, const std::vector<std::size_t>& idx) {
    put_u64(out, idx.size());
    for (std::size_t i : idx) put_u64(out, i);
}

std::vector<std::size_t> get_indices(std::istream& in, std::uint64_t limit) {
    const std::uint64_t n = get_u64(in);
    if (n > limit) throw DataError("model file: index list longer than visible layer");
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = get_u64(in);
    return idx;
}

}  // namespace

void RbmModel::save(std::ostream& out) const {
    out.write(kMagic, sizeof kMagic);
    put_u64(out, kVersion);
    put_u64(out, n_visible());
    put_u64(out, n_hidden());
    for (const auto& u : units_) {
        put_u64(out, static_cast<std::uint64_t>(u.kind));
        put_f64(out, u.sigma_sq);
    }
    put_indices(out, layout_.features);
    put_indices(out, layout_.labels);
    put_u64(out, layout_.class_groups.size());
    for (const auto& g : layout_.class_groups) put_indices(out, g);
    for (Eigen::Index i = 0; i < weights_.rows(); ++i) {
        for (Eigen::Index j = 0; j < weights_.cols(); ++j) put_f64(out, weights_(i, j));
    }
    for (Eigen::Index i = 0; i < visible_bias_.size(); ++i) put_f64(out, visible_bias_(i));
    for (Eigen::Index j = 0; j < hidden_bias_.size(); ++j) put_f64(out, hidden_bias_(j));
    if (!out) throw DataError("model write failed");
}

RbmModel RbmModel::load(std::istream& in) {
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw DataError("not a model file (bad magic at byte 0)");
    }
    if (get_u64(in) != kVersion) throw DataError("unsupported model file version");
    const std::uint64_t nv = get_u64(in);
    const std::uint64_t nh = get_u64(in);
    constexpr std::uint64_t kSane = 1ULL << 24;
    if (nv > kSane || nh > kSane) throw DataError("model file: implausible dimensions");
    std::vector<VisibleUnitSpec> units(nv);
    for (auto& u : units) {
        const std::uint64_t kind = get_u64(in);
        if (kind > 1) throw DataError("model file: unknown unit kind");
        u.kind = static_cast<UnitKind>(kind);
        u.sigma_sq = get_f64(in);
    }
    VisibleLayout layout;
    layout.features = get_indices(in, nv);
    layout.labels = get_indices(in, nv);
    const std::uint64_t n_groups = get_u64(in);
    if (n_groups > nv) throw DataError("model file: too many class groups");
    layout.class_groups.resize(n_groups);
    for (auto& g : layout.class_groups) g = get_indices(in, nv);

    RbmModel model(std::move(units), std::move(layout), nh);
    for (Eigen::Index i = 0; i < model.weights_.rows(); ++i) {
        for (Eigen::Index j = 0; j < model.weights_.cols(); ++j) model.weights_(i, j) = get_f64(in);
    }
    for (Eigen::Index i = 0; i < model.visible_bias_.size(); ++i) model.visible_bias_(i) = get_f64(in);
    for (Eigen::Index j = 0; j < model.hidden_bias_.size(); ++j) model.hidden_bias_(j) = get_f64(in);
    return model;
}

void RbmModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    save(out);
}

RbmModel RbmModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return load(in);
}

// ---------------------------------------------------------------------------

namespace {

void require_size(const Vector& x, std::size_t n, const char* what) {
    if (static_cast<std::size_t>(x.size()) != n) {
        throw ShapeError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                         std::to_string(x.size()));
    }
}

}  // namespace

double energy(const RbmModel& model, const Vector& v, const Vector& h) {
    require_size(v, model.n_visible(), "energy(v)");
    require_size(h, model.n_hidden(), "energy(h)");
    return -v.dot(model.weights() * h) - model.visible_bias().dot(v) - model.hidden_bias().dot(h);
}

Vector hidden_field(const RbmModel& model, const Vector& v) {
    require_size(v, model.n_visible(), "hidden_field(v)");
    return model.weights().transpose() * v + model.hidden_bias();
}

Vector visible_field(const RbmModel& model, const Vector& h) {
    require_size(h, model.n_hidden(), "visible_field(h)");
    return model.weights() * h + model.visible_bias();
}

Vector hidden_conditional(const RbmModel& model, const Vector& v) {
    return hidden_field(model, v).unaryExpr([](double x) { return sigmoid(x); });
}

VisibleConditional visible_conditional(const RbmModel& model, const Vector& h) {
    const Vector field = visible_field(model, h);
    VisibleConditional out{Vector(field.size()), Vector::Zero(field.size())};
    for (Eigen::Index i = 0; i < field.size(); ++i) {
        const auto& u = model.unit(static_cast<std::size_t>(i));
        if (u.is_binary()) {
            out.mean(i) = sigmoid(field(i));
        } else {
            out.mean(i) = field(i) * u.sigma_sq;
            out.variance(i) = u.sigma_sq;
        }
    }
    return out;
}

Vector sample_hidden(const Vector& activation, Rng& rng) {
    Vector h(activation.size());
    for (Eigen::Index j = 0; j < activation.size(); ++j) h(j) = bernoulli(rng, activation(j)) ? 1.0 : 0.0;
    return h;
}

Vector sample_visible(const RbmModel& model, const VisibleConditional& conditional, Rng& rng) {
    require_size(conditional.mean, model.n_visible(), "sample_visible");
    Vector v(conditional.mean.size());
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (model.unit(static_cast<std::size_t>(i)).is_binary()) {
            v(i) = bernoulli(rng, conditional.mean(i)) ? 1.0 : 0.0;
        } else {
            v(i) = conditional.mean(i) + std::sqrt(conditional.variance(i)) * normal(rng);
        }
    }
    return v;
}

}  // namespace lossyrbm

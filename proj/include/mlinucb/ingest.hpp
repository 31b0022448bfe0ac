#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Eigenvalues>

#include "environment.hpp"

namespace mlinucb {

struct ExpectedDims {
    std::optional<std::size_t> rows;
    std::optional<std::size_t> features;
    std::optional<std::size_t> classes;
};

enum class HeaderMode { detect, present, absent };

struct DatasetSpec {
    std::string name = "custom";
    std::filesystem::path path;
    // "first", "last", a 0-based column index, or a header name
    std::string label_column = "last";
    char delimiter = ',';
    HeaderMode header = HeaderMode::detect;
    std::optional<ExpectedDims> expected_dims;
    bool scale_features = false;
};

struct LoadReport {
    std::size_t imputed_cells = 0;
    bool had_header = false;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

inline bool is_missing(std::string_view cell) { return cell.empty() || cell == "?" || cell == "NA"; }

inline std::optional<double> parse_number(std::string_view cell) {
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    const auto* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::size_t resolve_label_column(const std::string& label, std::size_t ncols,
                                        const std::vector<std::string_view>* header) {
    if (label == "last") return ncols - 1;
    if (label == "first") return 0;
    if (!label.empty() && std::all_of(label.begin(), label.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        const auto idx = static_cast<std::size_t>(std::stoull(label));
        if (idx >= ncols) throw std::invalid_argument("load_csv: label column index out of range");
        return idx;
    }
    if (header != nullptr) {
        for (std::size_t i = 0; i < header->size(); ++i) {
            if ((*header)[i] == label) return i;
        }
    }
    throw std::invalid_argument("load_csv: label column '" + label + "' not found");
}

}  // namespace detail

// Rescales every feature column to [0,1]; constant columns become 0.
inline void min_max_scale(BanditDataset& ds) {
    for (Eigen::Index c = 0; c < ds.contexts.cols(); ++c) {
        auto col = ds.contexts.col(c);
        const double lo = col.minCoeff();
        const double hi = col.maxCoeff();
        if (hi > lo) {
            col = (col.array() - lo) / (hi - lo);
        } else {
            col.setZero();
        }
    }
}

inline void check_expected_dims(const BanditDataset& ds, const ExpectedDims& want) {
    auto fail = [&](const char* what, std::size_t got, std::size_t exp) {
        throw std::runtime_error("load_csv: " + ds.name + " " + what + " = " + std::to_string(got) +
                                 ", expected " + std::to_string(exp));
    };
    if (want.rows && *want.rows != ds.rows()) fail("rows", ds.rows(), *want.rows);
    if (want.features && *want.features != ds.dim()) fail("features", ds.dim(), *want.features);
    if (want.classes && *want.classes != ds.num_arms) fail("classes", ds.num_arms, *want.classes);
}

// Parses delimited numeric text with one label column. Empty, "?" and
// "NA" feature cells are replaced by their column mean; label values map
// to [0, K) in order of first appearance.
inline BanditDataset load_csv(const DatasetSpec& spec, LoadReport* report = nullptr) {
    std::ifstream in(spec.path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + spec.path.string());

    std::vector<std::string> lines;
    std::vector<std::size_t> line_numbers;
    {
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (detail::trim(line).empty()) continue;
            lines.push_back(std::move(line));
            line_numbers.push_back(n);
        }
    }
    if (lines.empty()) throw std::runtime_error("load_csv: " + spec.path.string() + " is empty");

    const auto first = detail::split(lines.front(), spec.delimiter);
    const std::size_t ncols = first.size();
    if (ncols < 2) throw std::runtime_error("load_csv: need at least one feature and one label column");

    bool has_header = spec.header == HeaderMode::present;
    if (spec.header == HeaderMode::detect) {
        std::size_t probe_label = ncols - 1;
        if (spec.label_column == "first") probe_label = 0;
        else if (!spec.label_column.empty() && std::isdigit(static_cast<unsigned char>(spec.label_column[0])))
            probe_label = std::min<std::size_t>(std::stoull(spec.label_column), ncols - 1);
        else if (spec.label_column != "last") probe_label = ncols;  // a name implies a header
        for (std::size_t i = 0; i < ncols && !has_header; ++i) {
            if (i == probe_label || detail::is_missing(first[i])) continue;
            if (!detail::parse_number(first[i])) has_header = true;
        }
        if (probe_label == ncols) has_header = true;
    }
    const std::size_t label_col =
        detail::resolve_label_column(spec.label_column, ncols, has_header ? &first : nullptr);

    const std::size_t body = lines.size() - (has_header ? 1 : 0);
    const std::size_t d = ncols - 1;
    BanditDataset ds;
    ds.name = spec.name;
    ds.contexts.resize(static_cast<Eigen::Index>(body), static_cast<Eigen::Index>(d));
    ds.labels.resize(body);
    std::vector<std::vector<std::size_t>> missing(d);
    std::unordered_map<std::string, std::size_t> label_ids;

    for (std::size_t r = 0; r < body; ++r) {
        const std::size_t li = r + (has_header ? 1 : 0);
        const auto cells = detail::split(lines[li], spec.delimiter);
        const auto where = [&] { return spec.path.string() + " line " + std::to_string(line_numbers[li]); };
        if (cells.size() != ncols) {
            throw std::runtime_error("load_csv: " + where() + ": expected " + std::to_string(ncols) +
                                     " columns, found " + std::to_string(cells.size()));
        }
        std::size_t f = 0;
        for (std::size_t c = 0; c < ncols; ++c) {
            if (c == label_col) continue;
            const auto cell = cells[c];
            if (detail::is_missing(cell)) {
                missing[f].push_back(r);
                ds.contexts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) = 0.0;
            } else if (auto v = detail::parse_number(cell)) {
                ds.contexts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) = *v;
            } else {
                throw std::runtime_error("load_csv: " + where() + ": cannot parse '" + std::string(cell) +
                                         "' in column " + std::to_string(c));
            }
            ++f;
        }
        const std::string key(cells[label_col]);
        if (detail::is_missing(key)) throw std::runtime_error("load_csv: " + where() + ": missing label");
        auto [it, inserted] = label_ids.try_emplace(key, label_ids.size());
        if (inserted) ds.class_names.push_back(key);
        ds.labels[r] = it->second;
    }

    std::size_t imputed = 0;
    for (std::size_t f = 0; f < d; ++f) {
        if (missing[f].empty()) continue;
        const auto fi = static_cast<Eigen::Index>(f);
        const std::size_t present = body - missing[f].size();
        const double mean = present == 0 ? 0.0 : ds.contexts.col(fi).sum() / static_cast<double>(present);
        for (auto r : missing[f]) ds.contexts(static_cast<Eigen::Index>(r), fi) = mean;
        imputed += missing[f].size();
    }

    ds.num_arms = label_ids.size();
    if (ds.num_arms < 2) throw std::runtime_error("load_csv: " + spec.path.string() + " has fewer than 2 classes");
    ds.validate();
    if (spec.expected_dims) check_expected_dims(ds, *spec.expected_dims);
    if (spec.scale_features) min_max_scale(ds);
    if (report != nullptr) *report = {imputed, has_header};
    return ds;
}

struct SyntheticData {
    BanditDataset dataset;
    std::vector<Vector> theta_star;  // one per arm, |theta| <= 1
};

// Linearly realizable multiclass data: theta*_k uniform in the unit ball,
// contexts uniform on the unit sphere, label = argmax_k theta*_k . x
// (+ optional Gaussian score noise).
inline SyntheticData synth_linear(std::size_t rows, std::size_t dim, std::size_t arms, double noise_sigma,
                                  std::uint64_t seed) {
    if (rows == 0 || dim == 0) throw std::invalid_argument("synth_linear: T and d must be positive");
    if (arms < 2) throw std::invalid_argument("synth_linear: need at least 2 arms");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synth_linear: noise_sigma must be >= 0");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto d = static_cast<Eigen::Index>(dim);
    auto unit_vector = [&] {
        Vector v(d);
        do {
            for (Eigen::Index i = 0; i < d; ++i) v(i) = gauss(rng);
        } while (v.norm() == 0.0);
        return Vector(v / v.norm());
    };

    SyntheticData out;
    for (std::size_t k = 0; k < arms; ++k) {
        const double radius = std::pow(unif(rng), 1.0 / static_cast<double>(dim));
        out.theta_star.push_back(radius * unit_vector());
    }
    auto& ds = out.dataset;
    ds.name = "synthetic";
    ds.num_arms = arms;
    ds.contexts.resize(static_cast<Eigen::Index>(rows), d);
    ds.labels.resize(rows);
    for (std::size_t t = 0; t < rows; ++t) {
        const Vector x = unit_vector();
        ds.contexts.row(static_cast<Eigen::Index>(t)) = x.transpose();
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < arms; ++k) {
            double s = out.theta_star[k].dot(x);
            if (noise_sigma > 0.0) s += noise_sigma * gauss(rng);
            if (s > best_score) {
                best_score = s;
                best = k;
            }
        }
        ds.labels[t] = best;
    }
    for (std::size_t k = 0; k < arms; ++k) ds.class_names.push_back(std::to_string(k));
    return out;
}

struct PcaResult {
    double variance_fraction = 1.0;   // (l1 + l2) / total variance
    double total_variance = 0.0;
    Eigen::Vector2d top_eigenvalues = Eigen::Vector2d::Zero();
    Eigen::MatrixXd components;       // d x 2, unit columns
    Eigen::MatrixXd projection;       // T x 2
    bool degenerate = false;          // zero total variance
};

// Top-2 principal components of the centered contexts. Variances use the
// 1/(T-1) normalization. Each component is signed so its first nonzero
// loading is positive.
inline PcaResult pca2_variance(const BanditDataset& ds) {
    const auto rows = static_cast<Eigen::Index>(ds.rows());
    const auto d = static_cast<Eigen::Index>(ds.dim());
    if (rows < 3) throw std::invalid_argument("pca2_variance: need at least 3 rows");

    const Eigen::RowVectorXd mean = ds.contexts.colwise().mean();
    const Eigen::MatrixXd centered = ds.contexts.rowwise() - mean;
    const double scale = 1.0 / static_cast<double>(rows - 1);

    PcaResult out;
    out.total_variance = centered.squaredNorm() * scale;
    out.components = Eigen::MatrixXd::Zero(d, 2);
    out.projection = Eigen::MatrixXd::Zero(rows, 2);
    if (!(out.total_variance > 0.0)) {
        out.degenerate = true;
        out.variance_fraction = 1.0;
        return out;
    }

    const Eigen::Index ncomp = std::min<Eigen::Index>(2, std::min(d, rows));
    if (d <= rows) {
        const Eigen::MatrixXd cov = (centered.transpose() * centered) * scale;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        if (eig.info() != Eigen::Success) throw std::runtime_error("pca2_variance: eigensolver failed");
        for (Eigen::Index c = 0; c < ncomp; ++c) {
            out.top_eigenvalues(c) = std::max(0.0, eig.eigenvalues()(d - 1 - c));
            out.components.col(c) = eig.eigenvectors().col(d - 1 - c);
        }
    } else {
        // more features than rows: work in the T x T Gram space
        const Eigen::MatrixXd gram = (centered * centered.transpose()) * scale;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        if (eig.info() != Eigen::Success) throw std::runtime_error("pca2_variance: eigensolver failed");
        for (Eigen::Index c = 0; c < ncomp; ++c) {
            const double lambda = std::max(0.0, eig.eigenvalues()(rows - 1 - c));
            out.top_eigenvalues(c) = lambda;
            if (lambda > 0.0) {
                Eigen::VectorXd v = centered.transpose() * eig.eigenvectors().col(rows - 1 - c);
                out.components.col(c) = v / v.norm();
            }
        }
    }
    for (Eigen::Index c = 0; c < 2; ++c) {
        auto col = out.components.col(c);
        const double tol = 1e-12 * col.cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < d; ++i) {
            if (std::abs(col(i)) > tol) {
                if (col(i) < 0.0) col = -col;
                break;
            }
        }
    }
    out.projection = centered * out.components;
    out.variance_fraction = std::clamp(out.top_eigenvalues.sum() / out.total_variance, 0.0, 1.0);
    return out;
}

// Columns pc1,pc2,label,cluster_id; cluster ids may be empty (-1 written).
inline void write_pca_csv(std::ostream& os, const PcaResult& pca, const std::vector<std::size_t>& labels,
                          const std::vector<long>& cluster_ids) {
    os << "pc1,pc2,label,cluster_id\n";
    os.precision(10);
    for (Eigen::Index t = 0; t < pca.projection.rows(); ++t) {
        const auto i = static_cast<std::size_t>(t);
        os << pca.projection(t, 0) << ',' << pca.projection(t, 1) << ',' << labels.at(i) << ','
           << (i < cluster_ids.size() ? cluster_ids[i] : -1L) << '\n';
    }
}

// Known datasets: where to find them under a data directory and the
// dimensions the prepared files are expected to have.
struct DatasetSource {
    std::string file;
    std::string label_column;
    HeaderMode header;
};

struct RegistryEntry {
    std::string name;
    std::vector<DatasetSource> sources;  // tried in order
    ExpectedDims expected;
    std::string origin;
    std::string preparation;
};

inline const std::vector<RegistryEntry>& dataset_registry() {
    static const std::vector<RegistryEntry> entries = {
        {"covertype",
         {{"covertype.csv", "last", HeaderMode::detect}, {"covtype.data", "last", HeaderMode::absent}},
         {std::nullopt, std::nullopt, 7},
         "https://archive.ics.uci.edu/dataset/31/covertype",
         "Download covtype.data.gz and gunzip it into the data directory (54 features + class). "
         "Runs subsample 20000 rows by default."},
        {"cnae9",
         {{"cnae9.csv", "last", HeaderMode::detect}, {"CNAE-9.data", "first", HeaderMode::absent}},
         {1080, 856, 9},
         "https://archive.ics.uci.edu/dataset/233/cnae+9",
         "Download CNAE-9.data (class in the first column, 856 word-frequency features)."},
        {"internet_ads",
         {{"internet_ads.csv", "last", HeaderMode::detect}, {"ad.data", "last", HeaderMode::absent}},
         {3279, 1558, 2},
         "https://archive.ics.uci.edu/dataset/51/internet+advertisements",
         "Download ad.data; '?' cells in the first columns are imputed with column means."},
        {"warfarin",
         {{"warfarin.csv", "last", HeaderMode::detect}},
         {std::nullopt, std::nullopt, 3},
         "https://www.pharmgkb.org/downloads (IWPC warfarin dataset, PS206767-1253283329)",
         "Run scripts/prepare_datasets.py warfarin <iwpc.xls> <data_dir>: drops rows without a "
         "therapeutic dose, bins the weekly dose into <21, 21-49, >49 mg and one-hot encodes "
         "the categorical columns."},
    };
    return entries;
}

inline const RegistryEntry* find_registry_entry(const std::string& name) {
    for (const auto& e : dataset_registry()) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

// Locates a registered dataset under data_dir, or nullopt when absent.
inline std::optional<DatasetSpec> resolve_dataset(const std::string& name, const std::filesystem::path& data_dir) {
    const auto* entry = find_registry_entry(name);
    if (entry == nullptr) throw std::invalid_argument("unknown dataset '" + name + "'");
    for (const auto& src : entry->sources) {
        const auto p = data_dir / src.file;
        if (std::filesystem::exists(p)) {
            DatasetSpec spec;
            spec.name = name;
            spec.path = p;
            spec.label_column = src.label_column;
            spec.header = src.header;
            spec.expected_dims = entry->expected;
            return spec;
        }
    }
    return std::nullopt;
}

}  // namespace mlinucb

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace threshsplit {

// Standardization bookkeeping for mapping estimates back to raw units.
struct NormMeta {
    bool standardized = false;
    double q_mean = 0.0, q_sd = 1.0;
    double s_mean = 0.0, s_sd = 1.0;
};

// Immutable observational unit: response y, regressors X (n x d), threshold
// variable q, and splitting covariate s. Standardization touches q and s only.
struct Dataset {
    Eigen::VectorXd y;
    Eigen::MatrixXd X;
    Eigen::VectorXd q;
    Eigen::VectorXd s;
    NormMeta norm;

    Eigen::Index n() const { return y.size(); }
    Eigen::Index d() const { return X.cols(); }
};

struct ColumnMap {
    std::string y = "y";
    std::vector<std::string> x;  // empty means intercept-only
    std::string q = "q";
    std::string s = "s";
    bool add_intercept = true;   // prepend a constant column
};

Dataset load_csv_dataset(const std::string& path, const ColumnMap& columns,
                         bool standardize);

// Writes y,x1..xd,q,s with full precision; the intercept column is included.
void write_csv_dataset(const Dataset& data, const std::string& path);

// Centers and scales q and s by their sample mean and sample standard
// deviation (divisor n-1), recording the transform in norm. Idempotent.
Dataset standardize_dataset(const Dataset& data);

// Linear-interpolation empirical quantile on a sorted vector (h = (n-1)p).
double empirical_quantile(const std::vector<double>& sorted_values, double p);
double empirical_quantile(const Eigen::VectorXd& values, double p);

enum class GridMode { equal, observed };

// Evaluation window over the splitting covariate: quantile bounds plus the
// grid of points where the threshold function is estimated.
struct EvalWindow {
    double s0_lo = 0.0;
    double s0_hi = 0.0;
    std::vector<double> grid;
};

EvalWindow make_eval_window(const Dataset& data, double coverage = 0.7,
                            std::size_t n_grid = 100,
                            GridMode mode = GridMode::equal);

// Rectangular intensity raster with lattice coordinates q in {1/n1,...,1}
// (rows, bottom row first) and s in {1/n2,...,1} (columns, left first).
struct RasterGrid {
    Eigen::MatrixXd values;  // row 0 = south (bottom)
    bool origin_flip = false;

    Eigen::Index n_rows() const { return values.rows(); }
    Eigen::Index n_cols() const { return values.cols(); }
    double q_of_row(Eigen::Index r) const {
        return static_cast<double>(r + 1) / static_cast<double>(values.rows());
    }
    double s_of_col(Eigen::Index c) const {
        return static_cast<double>(c + 1) / static_cast<double>(values.cols());
    }

    // Intercept-only Dataset; rows flattened in row-major order.
    Dataset flatten() const;
};

// origin_flip = true means the file's first row is the north (top) row and
// gets reversed so that internal row 0 is always the bottom row.
RasterGrid load_raster_grid(const std::string& path, bool origin_flip);

}  // namespace threshsplit

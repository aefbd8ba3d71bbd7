#pragma once

// Shared test helpers. The numeric routines here are deliberately
// independent of the library's solvers (dense Gauss-Jordan, direct
// summation, quadrature) so they can serve as oracles.

#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

namespace testutil {

using Matrix = std::vector<std::vector<double>>;

inline Matrix make_matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Matrix(rows, std::vector<double>(cols, fill));
}

/// Solve A x = b by Gauss-Jordan elimination with partial pivoting.
inline std::vector<double> gauss_solve(Matrix a, std::vector<double> b) {
    const std::size_t n = a.size();
    assert(b.size() == n);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < 1e-300) {
            throw std::runtime_error("gauss_solve: singular matrix");
        }
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        const double diag = a[col][col];
        for (std::size_t c = col; c < n; ++c) a[col][c] /= diag;
        b[col] /= diag;
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col || a[r][col] == 0.0) continue;
            const double factor = a[r][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
            b[r] -= factor * b[col];
        }
    }
    return b;
}

/// Invert a square matrix by Gauss-Jordan (oracle for (X'X)^-1 checks).
inline Matrix gauss_invert(Matrix a) {
    const std::size_t n = a.size();
    Matrix inv = make_matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < 1e-300) {
            throw std::runtime_error("gauss_invert: singular matrix");
        }
        std::swap(a[col], a[pivot]);
        std::swap(inv[col], inv[pivot]);
        const double diag = a[col][col];
        for (std::size_t c = 0; c < n; ++c) {
            a[col][c] /= diag;
            inv[col][c] /= diag;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col || a[r][col] == 0.0) continue;
            const double factor = a[r][col];
            for (std::size_t c = 0; c < n; ++c) {
                a[r][c] -= factor * a[col][c];
                inv[r][c] -= factor * inv[col][c];
            }
        }
    }
    return inv;
}

/// Normal-equation OLS oracle: solve (X'X) beta = X'y directly.
inline std::vector<double> normal_equation_ols(const Matrix& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    const std::size_t k = x[0].size();
    Matrix xtx = make_matrix(k, k);
    std::vector<double> xty(k, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < k; ++i) {
            xty[i] += x[r][i] * y[r];
            for (std::size_t j = 0; j < k; ++j) xtx[i][j] += x[r][i] * x[r][j];
        }
    }
    return gauss_solve(std::move(xtx), std::move(xty));
}

/// Two-sided Student-t p-value by Simpson quadrature over the density,
/// independent of any statistics library.
inline double t_two_sided_p(double t, double dof) {
    const double a = std::abs(t);
    const double log_norm = std::lgamma((dof + 1.0) / 2.0) - std::lgamma(dof / 2.0) -
                            0.5 * std::log(dof * std::acos(-1.0));
    auto pdf = [&](double x) {
        return std::exp(log_norm - (dof + 1.0) / 2.0 * std::log1p(x * x / dof));
    };
    const double upper = a + 60.0;
    const int steps = 200000; // even
    const double h = (upper - a) / steps;
    double sum = pdf(a) + pdf(upper);
    for (int i = 1; i < steps; ++i) {
        sum += pdf(a + h * i) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    const double tail = sum * h / 3.0;
    return 2.0 * tail;
}

inline double sample_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
    const double m = sample_mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// ---------------------------------------------------------------------------
// Filesystem helpers
// ---------------------------------------------------------------------------

/// Self-cleaning unique directory under the system temp path.
class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        std::random_device rd;
        std::ostringstream name;
        name << "finsent_test_" << ::getpid() << "_" << counter++ << "_" << std::hex << rd();
        path_ = std::filesystem::temp_directory_path() / name.str();
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

/// Run the CLI binary with the given argument string; returns the exit code.
/// stdout and stderr are captured into `log_path` when provided.
inline int run_cli(const std::string& args, const std::string& log_path = "") {
#ifdef FINSENT_CLI_PATH
    std::string command = std::string(FINSENT_CLI_PATH) + " " + args;
#else
    std::string command = "false " + args;
#endif
    if (!log_path.empty()) {
        command += " > " + log_path + " 2>&1";
    } else {
        command += " > /dev/null 2>&1";
    }
    const int status = std::system(command.c_str());
    if (status == -1) return -1;
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return -1;
}

} // namespace testutil

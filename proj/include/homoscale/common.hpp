#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace homoscale {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Distinct failure families so callers can react without string matching.
class ConfigError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class PreconditionError : public Error { using Error::Error; };
class NumericalError : public Error { using Error::Error; };
class InsufficientData : public Error { using Error::Error; };

struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// Worker count: HOMOSCALE_THREADS if set, else hardware concurrency.
int worker_count();

// Runs fn(block) for block in [0, n_blocks). Each block is processed by
// exactly one worker; results written per block keep reductions ordered.
void parallel_blocks(std::size_t n_blocks, const std::function<void(std::size_t)>& fn);

// Fixed block size used for path-parallel reductions.
constexpr std::size_t kPathBlock = 512;

inline std::size_t n_blocks_for(std::size_t n) { return (n + kPathBlock - 1) / kPathBlock; }

}  // namespace homoscale

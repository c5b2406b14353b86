#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace vqtt {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;

// User/configuration mistakes: bad config keys, bad flag values, unusable inputs.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor/spectrogram dimensions.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem and file-format failures (unreadable WAV, truncated checkpoint, ...).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A loss went non-finite during optimization; names the component that diverged.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vqtt

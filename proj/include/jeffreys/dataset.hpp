#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace jeffreys {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Utterance vectors stored one per row, with an integer label per row.
// Training sets carry class indices in [0, num_classes); evaluation sets carry
// speaker ids, which need not overlap the training classes.
struct LabeledSet {
  Matrix features;
  std::vector<int> labels;
  std::string domain = "in_domain";

  std::size_t size() const { return labels.size(); }
  int dim() const { return static_cast<int>(features.cols()); }
};

}  // namespace jeffreys

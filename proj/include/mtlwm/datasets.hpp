#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mtlwm {

// Primary-task samples stored column-wise.
struct LabeledDataset {
  Eigen::MatrixXd inputs;  // d x n
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;

  std::size_t size() const noexcept { return labels.size(); }
  int dim() const noexcept { return static_cast<int>(inputs.rows()); }
  void validate() const;

  LabeledDataset subset(std::span<const std::size_t> indices) const;
  // Zero-pad (or keep) every sample to the requested dimension.
  LabeledDataset padded_to(int dim) const;
};

LabeledDataset gen_blobs(int classes, int dim, int n_per_class, double spread, std::uint64_t seed);

LabeledDataset load_csv(const std::filesystem::path& path, int dim, int classes);
void write_csv(const LabeledDataset& ds, const std::filesystem::path& path);

struct SplitSpec {
  double train = 0.6;
  double test = 0.2;
  double adversary = 0.2;
  std::uint64_t seed = 0;
};

struct Split {
  LabeledDataset train;
  LabeledDataset test;
  LabeledDataset adversary;
};

Split split(const LabeledDataset& ds, const SplitSpec& spec);

// Seeded sample without replacement of round(fraction * n) indices.
std::vector<std::size_t> sample_indices(std::size_t n, double fraction, std::uint64_t seed);

}  // namespace mtlwm

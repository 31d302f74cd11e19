#include "mtlwm/datasets.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "mtlwm/errors.hpp"

namespace mtlwm {

void LabeledDataset::validate() const {
  if (static_cast<Eigen::Index>(labels.size()) != inputs.cols()) {
    throw StructuralError("dataset '" + name + "': label count does not match sample count");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw DomainError("dataset '" + name + "': label " + std::to_string(y) + " out of range");
    }
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.name = name;
  out.inputs.resize(inputs.rows(), static_cast<Eigen::Index>(indices.size()));
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.inputs.col(static_cast<Eigen::Index>(i)) = inputs.col(static_cast<Eigen::Index>(indices[i]));
    out.labels.push_back(labels.at(indices[i]));
  }
  return out;
}

LabeledDataset LabeledDataset::padded_to(int dim) const {
  if (dim < this->dim()) {
    throw StructuralError("cannot pad " + std::to_string(this->dim()) + "-dim samples down to " +
                          std::to_string(dim));
  }
  LabeledDataset out = *this;
  out.inputs = Eigen::MatrixXd::Zero(dim, inputs.cols());
  out.inputs.topRows(inputs.rows()) = inputs;
  return out;
}

LabeledDataset gen_blobs(int classes, int dim, int n_per_class, double spread, std::uint64_t seed) {
  if (classes < 2) throw ConfigError("gen_blobs: need at least two classes");
  if (dim < 1) throw ConfigError("gen_blobs: dimension must be >= 1");
  if (n_per_class < 0 || spread < 0.0) throw ConfigError("gen_blobs: invalid size or spread");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  Eigen::MatrixXd means(dim, classes);
  for (int c = 0; c < classes; ++c) {
    Eigen::VectorXd v(dim);
    do {
      for (int i = 0; i < dim; ++i) v[i] = unit(rng);
    } while (v.norm() == 0.0);
    means.col(c) = v.normalized() * (4.0 * spread);
  }

  LabeledDataset ds;
  ds.name = "blobs";
  ds.num_classes = classes;
  ds.inputs.resize(dim, static_cast<Eigen::Index>(classes) * n_per_class);
  ds.labels.reserve(static_cast<std::size_t>(classes) * n_per_class);
  Eigen::Index col = 0;
  for (int c = 0; c < classes; ++c) {
    for (int k = 0; k < n_per_class; ++k, ++col) {
      for (int i = 0; i < dim; ++i) ds.inputs(i, col) = means(i, c) + spread * unit(rng);
      ds.labels.push_back(c);
    }
  }
  return ds;
}

LabeledDataset load_csv(const std::filesystem::path& path, int dim, int classes) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open dataset file " + path.string());
  LabeledDataset ds;
  ds.name = path.stem().string();
  ds.num_classes = classes;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    while (true) {
      auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (static_cast<int>(cells.size()) != dim + 1) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(dim + 1) + " columns, found " +
                           std::to_string(cells.size()),
                       line_no);
    }
    for (int i = 0; i < dim; ++i) {
      auto cell = cells[i];
      while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
      while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
      double v;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw ParseError("line " + std::to_string(line_no) + ": malformed number in column " +
                             std::to_string(i + 1),
                         line_no);
      }
      values.push_back(v);
    }
    auto cell = cells.back();
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
    int y;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), y);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed label", line_no);
    }
    if (y < 0 || y >= classes) {
      throw DomainError("line " + std::to_string(line_no) + ": label " + std::to_string(y) +
                        " outside [0, " + std::to_string(classes) + ")");
    }
    ds.labels.push_back(y);
  }
  ds.inputs = Eigen::Map<Eigen::MatrixXd>(values.data(), dim,
                                          static_cast<Eigen::Index>(ds.labels.size()));
  return ds;
}

void write_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw NotFoundError("cannot write " + path.string());
  char buf[32];
  for (Eigen::Index j = 0; j < ds.inputs.cols(); ++j) {
    for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), ds.inputs(i, j));
      out.write(buf, ptr - buf);
      out.put(',');
    }
    out << ds.labels[static_cast<std::size_t>(j)] << '\n';
  }
}

std::vector<std::size_t> sample_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("sample fraction outside [0, 1]");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  return idx;
}

Split split(const LabeledDataset& ds, const SplitSpec& spec) {
  for (double f : {spec.train, spec.test, spec.adversary}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must lie in [0, 1]");
  }
  if (spec.train + spec.test + spec.adversary > 1.0 + 1e-12) {
    throw ConfigError("split fractions sum to more than 1");
  }
  const std::size_t n = ds.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  auto take = [n](double f) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_train = take(spec.train);
  const std::size_t n_test = std::min(take(spec.test), n - n_train);
  const std::size_t n_adv = std::min(take(spec.adversary), n - n_train - n_test);

  std::span<const std::size_t> all(idx);
  Split out{ds.subset(all.subspan(0, n_train)), ds.subset(all.subspan(n_train, n_test)),
            ds.subset(all.subspan(n_train + n_test, n_adv))};
  out.train.name = ds.name + "/train";
  out.test.name = ds.name + "/test";
  out.adversary.name = ds.name + "/adversary";
  return out;
}

}  // namespace mtlwm

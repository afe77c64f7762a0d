#ifndef IRSS_DATASET_HPP_
#define IRSS_DATASET_HPP_

// Sample/Dataset containers shared by the generators, the clusterers and the
// trainer, plus the on-disk dump format:
//
//   [8 bytes magic "IRSSDS1\n"] [u64 little-endian header length]
//   [header JSON bytes]         [n * dim f64 little-endian, sample-major]
//
// The header carries {"n", "x_shape", "classes", "y", "true_style",
// "true_env"}. Pseudo labels are learner state and are not persisted.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "irss/common.hpp"
#include "irss/tensor.hpp"

namespace irss {

struct Sample {
  std::vector<double> x;  // flattened raw features
  int y = 0;
  int true_style = 0;  // generator-side ground truth, hidden from the learner
  int true_env = 0;
  int pseudo_style = -1;  // learner-assigned; -1 = unset
  int env_label = -1;
};

struct Dataset {
  std::vector<std::size_t> x_shape;  // per-sample shape, {D} or {C,H,W}
  std::size_t classes = 2;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t dim() const { return shape_numel(x_shape); }

  // (m, D) constant tensor for the given sample indices.
  Tensor batch_x(std::span<const std::size_t> idx) const {
    std::size_t d = dim();
    std::vector<double> v(idx.size() * d);
    for (std::size_t t = 0; t < idx.size(); ++t)
      std::copy_n(samples[idx[t]].x.data(), d, v.data() + t * d);
    return Tensor::constant({idx.size(), d}, std::move(v));
  }
  Tensor all_x() const {
    std::vector<std::size_t> idx(size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return batch_x(idx);
  }

  std::vector<int> labels(std::span<const std::size_t> idx) const {
    std::vector<int> y(idx.size());
    for (std::size_t t = 0; t < idx.size(); ++t) y[t] = samples[idx[t]].y;
    return y;
  }

  void append(const Dataset& other) {
    if (samples.empty()) {
      x_shape = other.x_shape;
      classes = other.classes;
    }
    if (x_shape != other.x_shape) throw shape_error("dataset append: shape mismatch");
    classes = std::max(classes, other.classes);
    samples.insert(samples.end(), other.samples.begin(), other.samples.end());
  }
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "dataset dump assumes a little-endian host");

inline void write_u64(std::ofstream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}

}  // namespace detail

inline constexpr char kDatasetMagic[8] = {'I', 'R', 'S', 'S', 'D', 'S', '1', '\n'};

inline void save_dataset(const Dataset& ds, const std::string& path) {
  nlohmann::json header;
  header["n"] = ds.size();
  header["x_shape"] = ds.x_shape;
  header["classes"] = ds.classes;
  std::vector<int> y, ts, te;
  for (const Sample& s : ds.samples) {
    y.push_back(s.y);
    ts.push_back(s.true_style);
    te.push_back(s.true_env);
  }
  header["y"] = y;
  header["true_style"] = ts;
  header["true_env"] = te;
  std::string hj = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw config_error("save_dataset: cannot open " + path);
  os.write(kDatasetMagic, 8);
  detail::write_u64(os, hj.size());
  os.write(hj.data(), std::streamsize(hj.size()));
  for (const Sample& s : ds.samples)
    os.write(reinterpret_cast<const char*>(s.x.data()),
             std::streamsize(s.x.size() * sizeof(double)));
  if (!os) throw config_error("save_dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw config_error("load_dataset: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kDatasetMagic, 8) != 0)
    throw config_error("load_dataset: bad magic in " + path);
  std::uint64_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hj(hlen, '\0');
  is.read(hj.data(), std::streamsize(hlen));
  if (!is) throw config_error("load_dataset: truncated header in " + path);
  nlohmann::json header = nlohmann::json::parse(hj);

  Dataset ds;
  ds.x_shape = header.at("x_shape").get<std::vector<std::size_t>>();
  ds.classes = header.at("classes").get<std::size_t>();
  std::size_t n = header.at("n").get<std::size_t>();
  auto y = header.at("y").get<std::vector<int>>();
  auto ts = header.at("true_style").get<std::vector<int>>();
  auto te = header.at("true_env").get<std::vector<int>>();
  if (y.size() != n || ts.size() != n || te.size() != n)
    throw config_error("load_dataset: label arrays disagree with n");
  std::size_t d = ds.dim();
  ds.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample& s = ds.samples[i];
    s.x.resize(d);
    is.read(reinterpret_cast<char*>(s.x.data()), std::streamsize(d * sizeof(double)));
    s.y = y[i];
    s.true_style = ts[i];
    s.true_env = te[i];
  }
  if (!is) throw config_error("load_dataset: truncated feature block in " + path);
  return ds;
}

}  // namespace irss

#endif  // IRSS_DATASET_HPP_

#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nestopt/contraction.hpp"

namespace nestopt {

/// Benchmarks in shuffled order; the first 80% are the train split.
struct Dataset {
  std::vector<ContractionSpec> benchmarks;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  std::uint64_t seed = 0;

  std::vector<ContractionSpec> train() const { return gather(train_indices); }
  std::vector<ContractionSpec> test() const { return gather(test_indices); }

 private:
  std::vector<ContractionSpec> gather(const std::vector<std::size_t>& idx) const {
    std::vector<ContractionSpec> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(benchmarks[i]);
    return out;
  }
};

namespace detail {

// std::shuffle's algorithm is implementation-defined; a hand-rolled
// Fisher-Yates over mt19937_64 draws keeps dataset order bit-identical
// across standard libraries.
template <typename T>
void fisher_yates(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng() % i]);
  }
}

inline void assign_split(Dataset& ds) {
  const std::size_t n = ds.benchmarks.size();
  const std::size_t train_count = n * 4 / 5;
  ds.train_indices.clear();
  ds.test_indices.clear();
  for (std::size_t i = 0; i < n; ++i) {
    (i < train_count ? ds.train_indices : ds.test_indices).push_back(i);
  }
}

}  // namespace detail

/// All (m, n, k) in {64, 80, ..., 256}^3: 13^3 = 2197 untiled matmul
/// benchmarks, seeded shuffle, 1757/440 train/test split.
inline Dataset generate_matmul_dataset(std::uint64_t seed) {
  Dataset ds;
  ds.seed = seed;
  for (int m = 64; m <= 256; m += 16) {
    for (int n = 64; n <= 256; n += 16) {
      for (int k = 64; k <= 256; k += 16) {
        std::ostringstream line;
        line << "C[m,n] += A[m,k] * B[k,n] | m=" << m << " n=" << n << " k=" << k;
        ds.benchmarks.push_back(parse_spec(line.str()));
      }
    }
  }
  std::mt19937_64 rng(seed);
  detail::fisher_yates(ds.benchmarks, rng);
  detail::assign_split(ds);
  return ds;
}

inline std::string spec_to_dsl(const ContractionSpec& spec) {
  std::ostringstream out;
  auto tensor = [&](const TensorRef& t) {
    out << t.name << '[';
    for (std::size_t i = 0; i < t.dims.size(); ++i) {
      if (i) out << ',';
      out << t.dims[i];
    }
    out << ']';
  };
  tensor(spec.output);
  out << " += ";
  tensor(spec.a);
  out << " * ";
  tensor(spec.b);
  out << " |";
  for (const auto& v : spec.all_dims()) out << ' ' << v << '=' << spec.extent(v);
  if (spec.post_op != PostOp::identity) out << " post=" << post_op_name(spec.post_op);
  return out.str();
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << "# benchmark dataset, seed=" << ds.seed << "\n";
  os << "# " << ds.benchmarks.size() << " benchmarks, train=" << ds.train_indices.size()
     << " test=" << ds.test_indices.size() << " (first 80% train)\n";
  for (const auto& spec : ds.benchmarks) os << spec_to_dsl(spec) << "\n";
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

/// Order in the file defines the split: first 80% train, rest test.
inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  const std::string text = buf.str();

  Dataset ds;
  const std::string tag = "seed=";
  if (auto at = text.find(tag); at != std::string::npos) {
    ds.seed = std::strtoull(text.c_str() + at + tag.size(), nullptr, 10);
  }
  ds.benchmarks = parse_benchmarks(text);
  detail::assign_split(ds);
  return ds;
}

}  // namespace nestopt

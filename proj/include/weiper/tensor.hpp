#ifndef WEIPER_TENSOR_HPP_
#define WEIPER_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace weiper {

// Non-owning row-major view over a float matrix.
class MatrixView {
 public:
  MatrixView() = default;
  MatrixView(std::span<const float> data, std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const float> data() const { return data_; }
  std::span<const float> row(std::size_t r) const {
    return data_.subspan(r * cols_, cols_);
  }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  // Rows [begin, end).
  MatrixView slice_rows(std::size_t begin, std::size_t end) const;

 private:
  std::span<const float> data_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
};

// Owning row-major float matrix; the in-memory form of a WPFT tensor.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const float> data() const { return values_; }
  std::span<float> data() { return values_; }
  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(values_).subspan(r * cols_, cols_);
  }
  std::span<float> row(std::size_t r) {
    return std::span<float>(values_).subspan(r * cols_, cols_);
  }
  float operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  float& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

  MatrixView view() const { return MatrixView(values_, rows_, cols_); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> values_;
};

// Throws DataError naming the first non-finite entry.
void require_finite(MatrixView m);

// N x K penultimate activations, one sample per row.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(Matrix values);

  std::size_t n_samples() const { return values_.rows(); }
  std::size_t n_features() const { return values_.cols(); }
  MatrixView view() const { return values_.view(); }
  const Matrix& matrix() const { return values_; }
  std::span<const float> sample(std::size_t n) const { return values_.row(n); }

  bool operator==(const FeatureMatrix&) const = default;

 private:
  Matrix values_;
};

// C x K final-layer weights with an optional bias (all zero by default).
class WeightMatrix {
 public:
  WeightMatrix() = default;
  explicit WeightMatrix(Matrix weights, std::vector<float> bias = {});

  std::size_t n_classes() const { return weights_.rows(); }
  std::size_t n_features() const { return weights_.cols(); }
  std::span<const float> row(std::size_t j) const { return weights_.row(j); }
  std::span<const float> bias() const { return bias_; }
  const Matrix& matrix() const { return weights_; }
  MatrixView view() const { return weights_.view(); }

  bool operator==(const WeightMatrix&) const = default;

 private:
  Matrix weights_;
  std::vector<float> bias_;
};

// ---- WPFT binary format ----------------------------------------------------

inline constexpr std::uint32_t kWpftVersion = 1;
inline constexpr std::uint32_t kWpftDtypeF32 = 1;
inline constexpr std::size_t kWpftHeaderBytes = 32;

std::vector<std::uint8_t> encode_tensor(MatrixView m);
Matrix decode_tensor(std::span<const std::uint8_t> bytes);

void save_tensor(const std::filesystem::path& path, MatrixView m);
Matrix load_tensor(const std::filesystem::path& path);

// ---- JSON sidecars and bundles ----------------------------------------------

enum class TensorRole { kFeatures, kWeights, kBias };
enum class SplitTag { kIdTrain, kIdVal, kIdTest, kOod };

struct TensorMeta {
  TensorRole role = TensorRole::kFeatures;
  std::string dataset;
  SplitTag tag = SplitTag::kIdTrain;
  bool near = false;

  bool operator==(const TensorMeta&) const = default;
};

// `dir/x.wpft` -> `dir/x.meta.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& tensor_path);
void save_meta(const std::filesystem::path& tensor_path, const TensorMeta& meta);
TensorMeta load_meta(const std::filesystem::path& tensor_path);

struct OodSet {
  std::string name;
  bool near = false;
  FeatureMatrix features;
};

struct DatasetBundle {
  std::string dataset;
  FeatureMatrix id_train;
  std::optional<FeatureMatrix> id_val;
  FeatureMatrix id_test;
  std::vector<OodSet> ood_sets;

  // Throws DataError unless every member shares K.
  void validate() const;
  std::size_t n_features() const { return id_train.n_features(); }
};

// A bundle together with the classifier head it was extracted from.
struct Benchmark {
  DatasetBundle data;
  WeightMatrix head;
};

// Writes every member as `<name>.wpft` + sidecar. OOD files are named
// `ood_<name>.wpft`.
void save_benchmark(const std::filesystem::path& dir, const Benchmark& bench);

// Reads every `*.wpft` with a sidecar in `dir`. OOD sets are ordered near
// first, then by name.
Benchmark load_benchmark(const std::filesystem::path& dir);

}  // namespace weiper

#endif  // WEIPER_TENSOR_HPP_

#include "weiper/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "weiper/error.hpp"

namespace weiper {

namespace fs = std::filesystem;
using nlohmann::json;

MatrixView::MatrixView(std::span<const float> data, std::size_t rows, std::size_t cols)
    : data_(data), rows_(rows), cols_(cols) {
  if (data.size() != rows * cols) throw DataError("matrix view size mismatch");
}

MatrixView MatrixView::slice_rows(std::size_t begin, std::size_t end) const {
  return MatrixView(data_.subspan(begin * cols_, (end - begin) * cols_), end - begin, cols_);
}

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0.0f) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw DataError("matrix has " + std::to_string(values_.size()) + " values, expected " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void require_finite(MatrixView m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!std::isfinite(row[c])) {
        throw DataError("non-finite value at (" + std::to_string(r) + "," + std::to_string(c) +
                        ")");
      }
    }
  }
}

FeatureMatrix::FeatureMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() == 0 || values_.cols() == 0) {
    throw DataError("feature matrix must have at least one sample and one feature");
  }
  require_finite(values_.view());
}

WeightMatrix::WeightMatrix(Matrix weights, std::vector<float> bias)
    : weights_(std::move(weights)), bias_(std::move(bias)) {
  if (weights_.rows() == 0 || weights_.cols() == 0) throw DataError("empty weight matrix");
  require_finite(weights_.view());
  if (bias_.empty()) bias_.assign(weights_.rows(), 0.0f);
  if (bias_.size() != weights_.rows()) {
    throw DataError("bias has " + std::to_string(bias_.size()) + " entries for " +
                    std::to_string(weights_.rows()) + " classes");
  }
  for (float b : bias_) {
    if (!std::isfinite(b)) throw DataError("non-finite bias value");
  }
  for (std::size_t j = 0; j < weights_.rows(); ++j) {
    double sq = 0.0;
    for (float v : weights_.row(j)) sq += static_cast<double>(v) * v;
    if (!(sq > 0.0)) throw DataError("weight row " + std::to_string(j) + " has zero norm");
  }
}

// ---- WPFT -------------------------------------------------------------------

namespace {

constexpr std::uint8_t kMagic[4] = {0x57, 0x50, 0x46, 0x54};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(bytes[offset + i]) << (8 * i);
  }
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(MatrixView m) {
  require_finite(m);
  std::vector<std::uint8_t> out;
  out.reserve(kWpftHeaderBytes + m.data().size() * 4);
  for (std::uint8_t b : kMagic) out.push_back(b);
  put_le<std::uint32_t>(out, kWpftVersion);
  put_le<std::uint32_t>(out, kWpftDtypeF32);
  put_le<std::uint32_t>(out, 2);
  put_le<std::uint64_t>(out, m.rows());
  put_le<std::uint64_t>(out, m.cols());
  for (float v : m.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Matrix decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw DataError("bad magic: not a WPFT tensor");
  }
  if (bytes.size() < kWpftHeaderBytes) throw DataError("truncated header");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  const auto dtype = get_le<std::uint32_t>(bytes, 8);
  const auto ndim = get_le<std::uint32_t>(bytes, 12);
  if (version != kWpftVersion) {
    throw DataError("unsupported WPFT version " + std::to_string(version));
  }
  if (dtype != kWpftDtypeF32) throw DataError("unsupported dtype " + std::to_string(dtype));
  if (ndim != 2) throw DataError("ndim must be 2, got " + std::to_string(ndim));
  const auto rows = get_le<std::uint64_t>(bytes, 16);
  const auto cols = get_le<std::uint64_t>(bytes, 24);
  const std::size_t payload = bytes.size() - kWpftHeaderBytes;
  if (cols != 0 && rows > payload / 4 / cols) {
    throw DataError("truncated payload: header declares " + std::to_string(rows) + "x" +
                    std::to_string(cols) + " but only " + std::to_string(payload) +
                    " data bytes present");
  }
  if (rows * cols * 4 != payload) {
    throw DataError("payload length " + std::to_string(payload) + " does not match declared " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
  std::vector<float> values(rows * cols);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, kWpftHeaderBytes + 4 * i));
  }
  Matrix m(rows, cols, std::move(values));
  require_finite(m.view());
  return m;
}

void save_tensor(const fs::path& path, MatrixView m) {
  const auto bytes = encode_tensor(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

Matrix load_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---- sidecars ----------------------------------------------------------------

namespace {

const char* role_name(TensorRole role) {
  switch (role) {
    case TensorRole::kFeatures: return "features";
    case TensorRole::kWeights: return "weights";
    case TensorRole::kBias: return "bias";
  }
  return "";
}

const char* tag_name(SplitTag tag) {
  switch (tag) {
    case SplitTag::kIdTrain: return "id_train";
    case SplitTag::kIdVal: return "id_val";
    case SplitTag::kIdTest: return "id_test";
    case SplitTag::kOod: return "ood";
  }
  return "";
}

TensorRole parse_role(const std::string& s) {
  if (s == "features") return TensorRole::kFeatures;
  if (s == "weights") return TensorRole::kWeights;
  if (s == "bias") return TensorRole::kBias;
  throw DataError("unknown tensor role '" + s + "'");
}

SplitTag parse_tag(const std::string& s) {
  if (s == "id_train") return SplitTag::kIdTrain;
  if (s == "id_val") return SplitTag::kIdVal;
  if (s == "id_test") return SplitTag::kIdTest;
  if (s == "ood") return SplitTag::kOod;
  throw DataError("unknown split tag '" + s + "'");
}

}  // namespace

fs::path sidecar_path(const fs::path& tensor_path) {
  fs::path p = tensor_path;
  p.replace_extension(".meta.json");
  return p;
}

void save_meta(const fs::path& tensor_path, const TensorMeta& meta) {
  const json doc = {{"role", role_name(meta.role)},
                    {"dataset", meta.dataset},
                    {"tag", tag_name(meta.tag)},
                    {"near", meta.near}};
  std::ofstream out(sidecar_path(tensor_path), std::ios::trunc);
  if (!out) throw DataError("cannot write " + sidecar_path(tensor_path).string());
  out << doc.dump(2) << "\n";
}

TensorMeta load_meta(const fs::path& tensor_path) {
  const fs::path path = sidecar_path(tensor_path);
  std::ifstream in(path);
  if (!in) throw DataError("missing sidecar " + path.string());
  try {
    const json doc = json::parse(in);
    TensorMeta meta;
    meta.role = parse_role(doc.at("role").get<std::string>());
    meta.dataset = doc.value("dataset", std::string());
    meta.tag = parse_tag(doc.value("tag", std::string("id_train")));
    meta.near = doc.value("near", false);
    return meta;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---- bundles ------------------------------------------------------------------

void DatasetBundle::validate() const {
  const std::size_t k = id_train.n_features();
  auto check = [k](const FeatureMatrix& m, const std::string& what) {
    if (m.n_features() != k) {
      throw DataError(what + " has K=" + std::to_string(m.n_features()) +
                      " but id_train has K=" + std::to_string(k));
    }
  };
  check(id_test, "id_test");
  if (id_val) check(*id_val, "id_val");
  for (const auto& set : ood_sets) check(set.features, "ood set '" + set.name + "'");
}

void save_benchmark(const fs::path& dir, const Benchmark& bench) {
  fs::create_directories(dir);
  const auto& data = bench.data;
  auto write = [&](const std::string& stem, MatrixView m, TensorMeta meta) {
    const fs::path path = dir / (stem + ".wpft");
    save_tensor(path, m);
    meta.dataset = meta.dataset.empty() ? data.dataset : meta.dataset;
    save_meta(path, meta);
  };
  write("weights", bench.head.view(), {TensorRole::kWeights, data.dataset, SplitTag::kIdTrain, false});
  const auto bias = bench.head.bias();
  write("bias", MatrixView(bias, 1, bias.size()),
        {TensorRole::kBias, data.dataset, SplitTag::kIdTrain, false});
  write("id_train", data.id_train.view(), {TensorRole::kFeatures, data.dataset, SplitTag::kIdTrain, false});
  if (data.id_val) {
    write("id_val", data.id_val->view(), {TensorRole::kFeatures, data.dataset, SplitTag::kIdVal, false});
  }
  write("id_test", data.id_test.view(), {TensorRole::kFeatures, data.dataset, SplitTag::kIdTest, false});
  for (const auto& set : data.ood_sets) {
    write("ood_" + set.name, set.features.view(), {TensorRole::kFeatures, set.name, SplitTag::kOod, set.near});
  }
}

Benchmark load_benchmark(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("bundle directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wpft") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  Benchmark bench;
  std::optional<Matrix> weights;
  std::vector<float> bias;
  bool have_train = false;
  bool have_test = false;
  for (const auto& path : files) {
    if (!fs::exists(sidecar_path(path))) continue;
    const TensorMeta meta = load_meta(path);
    Matrix m = load_tensor(path);
    switch (meta.role) {
      case TensorRole::kWeights:
        weights = std::move(m);
        if (bench.data.dataset.empty()) bench.data.dataset = meta.dataset;
        break;
      case TensorRole::kBias:
        bias.assign(m.data().begin(), m.data().end());
        break;
      case TensorRole::kFeatures:
        switch (meta.tag) {
          case SplitTag::kIdTrain:
            bench.data.id_train = FeatureMatrix(std::move(m));
            have_train = true;
            break;
          case SplitTag::kIdVal:
            bench.data.id_val = FeatureMatrix(std::move(m));
            break;
          case SplitTag::kIdTest:
            bench.data.id_test = FeatureMatrix(std::move(m));
            have_test = true;
            break;
          case SplitTag::kOod:
            bench.data.ood_sets.push_back({meta.dataset, meta.near, FeatureMatrix(std::move(m))});
            break;
        }
        break;
    }
  }
  if (!weights) throw DataError(dir.string() + ": no tensor with role 'weights'");
  if (!have_train) throw DataError(dir.string() + ": no id_train features");
  if (!have_test) throw DataError(dir.string() + ": no id_test features");
  bench.head = WeightMatrix(std::move(*weights), std::move(bias));
  std::stable_sort(bench.data.ood_sets.begin(), bench.data.ood_sets.end(),
                   [](const OodSet& a, const OodSet& b) {
                     if (a.near != b.near) return a.near;
                     return a.name < b.name;
                   });
  bench.data.validate();
  if (bench.head.n_features() != bench.data.n_features()) {
    throw DataError("weights have K=" + std::to_string(bench.head.n_features()) +
                    " but features have K=" + std::to_string(bench.data.n_features()));
  }
  return bench;
}

}  // namespace weiper

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "exo/csv.hpp"
#include "exo/ecn.hpp"

namespace exo::ecn {

namespace {

static_assert(std::endian::native == std::endian::little, "ECN1 I/O assumes a little-endian host");

constexpr char kMagic[4] = {'E', 'C', 'N', '1'};
constexpr std::uint32_t kMaxLayers = 64;
constexpr std::uint32_t kMaxWidth = 1u << 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  put_u32(out, bits);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32(const char* field) { return std::bit_cast<float>(u32(field)); }
  void need(std::size_t n, const char* field) const {
    if (pos_ + n > bytes_.size()) throw FormatError(field, "truncated file");
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, data, static_cast<uInt>(n));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> serialize_params(const MlpParams& psi) {
  psi.validate();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(psi.layers.size()));
  for (const auto& l : psi.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.weights.rows()));
    put_u32(out, static_cast<std::uint32_t>(l.weights.cols()));
  }
  const std::size_t float_start = out.size();
  for (const auto& l : psi.layers) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) put_f32(out, l.weights(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put_f32(out, l.bias[r]);
  }
  put_u32(out, crc_of(out.data() + float_start, out.size() - float_start));
  return out;
}

MlpParams deserialize_params(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("magic", "not an ECN1 parameter file");
  }
  Reader in(bytes.subspan(4));
  const std::uint32_t count = in.u32("layer_count");
  if (count == 0 || count > kMaxLayers) throw FormatError("layer_count", "out of range");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t rows = in.u32("rows");
    const std::uint32_t cols = in.u32("cols");
    if (rows == 0 || cols == 0 || rows > kMaxWidth || cols > kMaxWidth) {
      throw FormatError("shape", "layer " + std::to_string(i) + " has an invalid shape");
    }
    if (i > 0 && cols != shapes.back().first) {
      throw FormatError("shape", "layer " + std::to_string(i) + " does not chain");
    }
    shapes.emplace_back(rows, cols);
  }
  const std::size_t float_start = 4 + in.pos();
  MlpParams psi;
  for (const auto& [rows, cols] : shapes) {
    in.need(4ull * (static_cast<std::size_t>(rows) * cols + rows), "weights");
    Layer l{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) l.weights(r, c) = in.f32("weights");
    }
    for (std::uint32_t r = 0; r < rows; ++r) l.bias[r] = in.f32("bias");
    psi.layers.push_back(std::move(l));
  }
  const std::size_t float_end = 4 + in.pos();
  const std::uint32_t stored = in.u32("checksum");
  if (in.pos() != in.size()) throw FormatError("trailer", "unexpected bytes after checksum");
  if (stored != crc_of(bytes.data() + float_start, float_end - float_start)) {
    throw FormatError("checksum", "mismatch");
  }
  try {
    psi.validate();
  } catch (const ValidationError& e) {
    throw FormatError("weights", e.what());
  }
  return psi;
}

std::uint32_t params_checksum(const MlpParams& psi) {
  const auto bytes = serialize_params(psi);
  Reader tail{std::span<const std::uint8_t>(bytes).last(4)};
  return tail.u32("checksum");
}

void save_params(const MlpParams& psi, const std::filesystem::path& path) {
  const auto bytes = serialize_params(psi);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

MlpParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_params(bytes);
}

void save_dataset_csv(std::span<const TrainingSample> data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < kInputDim; ++i) out << "s" << i << ',';
  out << "tau_hipL,tau_hipR,tau_kneeL,tau_kneeR\n";
  for (const auto& s : data) {
    for (std::size_t i = 0; i < kInputDim; ++i) out << csv::format_double(s.input[static_cast<Eigen::Index>(i)]) << ',';
    for (std::size_t j = 0; j < kOutputDim; ++j) {
      out << csv::format_double(s.target[static_cast<Eigen::Index>(j)]) << (j + 1 < kOutputDim ? ',' : '\n');
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<TrainingSample> load_dataset_csv(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  if (table.header.size() != kInputDim + kOutputDim) {
    throw FormatError("header", "expected 84 columns");
  }
  std::vector<TrainingSample> data;
  data.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = "line " + std::to_string(table.line_numbers[r]);
    TrainingSample s;
    for (std::size_t i = 0; i < kInputDim; ++i) s.input[static_cast<Eigen::Index>(i)] = csv::parse_double(row[i], where);
    for (std::size_t j = 0; j < kOutputDim; ++j) {
      s.target[static_cast<Eigen::Index>(j)] = csv::parse_double(row[kInputDim + j], where);
    }
    data.push_back(s);
  }
  return data;
}

}  // namespace exo::ecn

#include "gebm/ad/param_vector.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "gebm/error.hpp"

namespace gebm::ad {

void ParamLayout::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 0 || cols < 0) throw DimensionError("negative block shape for " + name);
  if (index_.contains(name)) throw ConfigError("duplicate parameter block " + name);
  index_.emplace(name, blocks_.size());
  blocks_.push_back({std::move(name), total_, rows, cols});
  total_ += rows * cols;
}

void ParamLayout::append(const ParamLayout& other) {
  for (const auto& b : other.blocks_) add(b.name, b.rows, b.cols);
}

std::size_t ParamLayout::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("no parameter block named " + std::string(name));
  return it->second;
}

bool ParamLayout::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

ParamVector::ParamVector() : layout_(std::make_shared<ParamLayout>()) {}

ParamVector::ParamVector(std::shared_ptr<const ParamLayout> layout, Vector values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (!layout_) throw ConfigError("ParamVector requires a layout");
  if (values_.size() != layout_->total_size())
    throw DimensionError("parameter values length " + std::to_string(values_.size()) +
                         " does not match layout size " + std::to_string(layout_->total_size()));
}

ParamVector ParamVector::zeros(std::shared_ptr<const ParamLayout> layout) {
  const auto n = layout->total_size();
  return ParamVector(std::move(layout), Vector::Zero(n));
}

Eigen::Map<const Matrix> ParamVector::block(std::string_view name) const {
  return block(layout_->index_of(name));
}

Eigen::Map<const Matrix> ParamVector::block(std::size_t index) const {
  const auto& b = layout_->blocks().at(index);
  return {values_.data() + b.offset, b.rows, b.cols};
}

ParamVector ParamVector::with_values(Vector values) const {
  return ParamVector(layout_, std::move(values));
}

ParamVector ParamVector::with_block(std::string_view name, const Matrix& value) const {
  const auto& b = layout_->block(name);
  if (value.rows() != b.rows || value.cols() != b.cols)
    throw DimensionError("block " + b.name + " shape mismatch");
  Vector v = values_;
  Eigen::Map<Matrix>(v.data() + b.offset, b.rows, b.cols) = value;
  return ParamVector(layout_, std::move(v));
}

ParamVector ParamVector::unflatten(std::shared_ptr<const ParamLayout> layout, const Vector& flat) {
  return ParamVector(std::move(layout), flat);
}

bool ParamVector::identical(const ParamVector& other) const {
  if (!(layout() == other.layout()) || values_.size() != other.values_.size()) return false;
  return std::memcmp(values_.data(), other.values_.data(),
                     sizeof(double) * static_cast<std::size_t>(values_.size())) == 0;
}

ParamVector operator+(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw DimensionError("ParamVector size mismatch");
  return a.with_values(a.values() + b.values());
}

ParamVector operator-(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw DimensionError("ParamVector size mismatch");
  return a.with_values(a.values() - b.values());
}

ParamVector operator*(double s, const ParamVector& a) { return a.with_values(s * a.values()); }

namespace {

static_assert(sizeof(double) == 8);

void write_le_doubles(std::ostream& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(v[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
}

}  // namespace

void save_params(const ParamVector& params, const std::filesystem::path& dir,
                 const std::string& stem) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "float64-le";
  manifest["total"] = params.size();
  manifest["blocks"] = nlohmann::json::array();
  for (const auto& b : params.layout().blocks())
    manifest["blocks"].push_back(
        {{"name", b.name}, {"offset", b.offset}, {"shape", {b.rows, b.cols}}});
  std::ofstream(dir / (stem + "manifest.json")) << manifest.dump(2) << '\n';
  std::ofstream bin(dir / (stem + "params.bin"), std::ios::binary);
  write_le_doubles(bin, params.values());
  if (!bin) throw std::runtime_error("failed writing " + (dir / (stem + "params.bin")).string());
}

ParamVector load_params(const std::filesystem::path& dir, const std::string& stem) {
  const auto manifest_path = dir / (stem + "manifest.json");
  std::ifstream mf(manifest_path);
  if (!mf) throw ParseError("cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  auto layout = std::make_shared<ParamLayout>();
  for (const auto& b : manifest.at("blocks")) {
    layout->add(b.at("name").get<std::string>(), b.at("shape").at(0).get<Eigen::Index>(),
                b.at("shape").at(1).get<Eigen::Index>());
    if (layout->blocks().back().offset != b.at("offset").get<Eigen::Index>())
      throw ParseError(manifest_path.string() + ": non-contiguous block offsets");
  }
  const auto bin_path = dir / (stem + "params.bin");
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw ParseError("cannot open " + bin_path.string());
  Vector values(layout->total_size());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    char bytes[8];
    if (!bin.read(bytes, 8)) throw ParseError(bin_path.string() + ": truncated parameter file");
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    values[i] = std::bit_cast<double>(bits);
  }
  if (bin.peek() != std::char_traits<char>::eof())
    throw ParseError(bin_path.string() + ": trailing bytes after parameters");
  return ParamVector(std::move(layout), std::move(values));
}

}  // namespace gebm::ad

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace gebm::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One named parameter block: a rows x cols matrix stored column-major at
/// [offset, offset + rows*cols) of the flat vector.
struct ParamBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
  bool operator==(const ParamBlock&) const = default;
};

/// Shape manifest shared by every ParamVector of the same model.
class ParamLayout {
 public:
  ParamLayout() = default;

  /// Appends a block; names must be unique.
  void add(std::string name, Eigen::Index rows, Eigen::Index cols);
  /// Appends every block of `other` (offsets are rebased).
  void append(const ParamLayout& other);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  Eigen::Index total_size() const { return total_; }
  /// Index of the named block; throws std::out_of_range if absent.
  std::size_t index_of(std::string_view name) const;
  bool contains(std::string_view name) const;
  const ParamBlock& block(std::string_view name) const { return blocks_[index_of(name)]; }

  bool operator==(const ParamLayout& other) const { return blocks_ == other.blocks_; }

 private:
  std::vector<ParamBlock> blocks_;
  std::unordered_map<std::string, std::size_t> index_;
  Eigen::Index total_ = 0;
};

/// Flat float-64 parameter values plus their layout. A value type: every
/// "update" returns a new vector.
class ParamVector {
 public:
  ParamVector();
  ParamVector(std::shared_ptr<const ParamLayout> layout, Vector values);

  static ParamVector zeros(std::shared_ptr<const ParamLayout> layout);

  const Vector& values() const { return values_; }
  const ParamLayout& layout() const { return *layout_; }
  const std::shared_ptr<const ParamLayout>& layout_ptr() const { return layout_; }
  Eigen::Index size() const { return values_.size(); }
  bool empty() const { return values_.size() == 0; }

  Eigen::Map<const Matrix> block(std::string_view name) const;
  Eigen::Map<const Matrix> block(std::size_t index) const;

  ParamVector with_values(Vector values) const;
  ParamVector with_block(std::string_view name, const Matrix& value) const;

  /// Concatenates the flat values of all blocks (the identity on storage).
  Vector flatten() const { return values_; }
  /// Rebuilds a vector for `layout` from flat storage; length must match.
  static ParamVector unflatten(std::shared_ptr<const ParamLayout> layout, const Vector& flat);

  /// Bitwise equality of layout and values.
  bool identical(const ParamVector& other) const;

 private:
  std::shared_ptr<const ParamLayout> layout_;
  Vector values_;
};

ParamVector operator+(const ParamVector& a, const ParamVector& b);
ParamVector operator-(const ParamVector& a, const ParamVector& b);
ParamVector operator*(double s, const ParamVector& a);

/// Writes `<dir>/<stem>manifest.json` and `<dir>/<stem>params.bin`
/// (little-endian float-64, no header).
void save_params(const ParamVector& params, const std::filesystem::path& dir,
                 const std::string& stem = "");
ParamVector load_params(const std::filesystem::path& dir, const std::string& stem = "");

}  // namespace gebm::ad

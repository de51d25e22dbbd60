#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pslr/mat.hpp"

namespace pslr {

struct ParamInfo {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

// Flat storage for all learnable arrays. One contiguous vector keeps the
// optimizer, checkpointing and finite-difference checks trivial; modules hold
// ids and view their slices.
class ParamStore {
 public:
  using Id = std::size_t;

  Id add(std::string name, std::size_t rows, std::size_t cols);

  std::size_t total() const { return values_.size(); }
  std::size_t count() const { return infos_.size(); }

  const ParamInfo& info(Id id) const { return infos_[id]; }
  const std::vector<ParamInfo>& infos() const { return infos_; }

  MatView view(Id id) {
    const ParamInfo& pi = infos_[id];
    return {values_.data() + pi.offset, pi.rows, pi.cols};
  }
  ConstMatView view(Id id) const {
    const ParamInfo& pi = infos_[id];
    return {values_.data() + pi.offset, pi.rows, pi.cols};
  }
  // Same slice layout inside an external buffer (gradients, Adam moments).
  MatView view_in(std::vector<double>& buf, Id id) const {
    const ParamInfo& pi = infos_[id];
    return {buf.data() + pi.offset, pi.rows, pi.cols};
  }
  ConstMatView view_in(const std::vector<double>& buf, Id id) const {
    const ParamInfo& pi = infos_[id];
    return {buf.data() + pi.offset, pi.rows, pi.cols};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  // Id lookup by name; throws if absent.
  Id find(const std::string& name) const;

 private:
  std::vector<ParamInfo> infos_;
  std::vector<double> values_;
};

}  // namespace pslr

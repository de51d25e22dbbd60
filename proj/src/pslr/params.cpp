#include "pslr/params.hpp"

#include "pslr/errors.hpp"

namespace pslr {

ParamStore::Id ParamStore::add(std::string name, std::size_t rows, std::size_t cols) {
  for (const auto& pi : infos_) {
    if (pi.name == name) throw ConfigError("duplicate parameter name '" + name + "'");
  }
  ParamInfo pi;
  pi.name = std::move(name);
  pi.offset = values_.size();
  pi.rows = rows;
  pi.cols = cols;
  infos_.push_back(pi);
  values_.resize(values_.size() + rows * cols, 0.0);
  return infos_.size() - 1;
}

ParamStore::Id ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < infos_.size(); ++i) {
    if (infos_[i].name == name) return i;
  }
  throw ConfigError("unknown parameter '" + name + "'");
}

}  // namespace pslr

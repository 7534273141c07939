#include "wbh/classes.hpp"

#include <algorithm>

#include "wbh/error.hpp"

namespace wbh {

ClassSet::ClassSet(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty())
      throw ConfigError("class name must not be empty");
    for (std::size_t j = i + 1; j < names_.size(); ++j)
      if (names_[i] == names_[j])
        throw ConfigError("duplicate class name: " + names_[i]);
  }
}

ClassSet ClassSet::canonical() {
  return ClassSet({"car", "bus", "person", "bicycle"});
}

std::optional<int> ClassSet::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end())
    return std::nullopt;
  return int(it - names_.begin());
}

} // namespace wbh

#pragma once

#include <optional>
#include <string>
#include <vector>

namespace wbh {

/// Ordered set of class names. class_id == position in the list, fixed for
/// the lifetime of an experiment.
class ClassSet {
public:
  ClassSet() = default;
  explicit ClassSet(std::vector<std::string> names); // throws ConfigError on duplicates

  /// The harness's canonical 4-class set: car, bus, person, bicycle.
  static ClassSet canonical();

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }
  std::optional<int> index_of(const std::string& name) const;

  bool operator==(const ClassSet&) const = default;

private:
  std::vector<std::string> names_;
};

} // namespace wbh

#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "afford/scene.hpp"

namespace afford {

/// One interaction record (x, a, b).
struct Transition {
  SceneObservation observation;
  Action action;
  Outcome outcome;
  int index = 0;
};

/// Append-only transition store; never reordered.
class ReplayBuffer {
 public:
  void push(Transition t) {
    t.index = static_cast<int>(transitions_.size());
    transitions_.push_back(std::move(t));
  }
  std::size_t size() const { return transitions_.size(); }
  bool empty() const { return transitions_.empty(); }
  const Transition& operator[](std::size_t i) const { return transitions_[i]; }

 private:
  std::vector<Transition> transitions_;
};

}  // namespace afford

#include "embal/types.hpp"

namespace embal {

namespace {
constexpr std::array<std::string_view, kActionCount> kActionNames = {
    "MoveForward", "MoveLeft", "MoveRight", "RotateLeft", "RotateRight", "Annotate", "Collect"};
}

std::string_view action_name(Action a) { return kActionNames[static_cast<int>(a)]; }

Action action_from_name(std::string_view name) {
  for (int i = 0; i < kActionCount; ++i)
    if (kActionNames[i] == name) return static_cast<Action>(i);
  throw Error("unknown action name: " + std::string(name));
}

}  // namespace embal

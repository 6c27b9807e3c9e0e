#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace embal {

/// Raised for contract violations (bad parameters, malformed files, empty inputs).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double squared_norm(Vec2 v) { return v.x * v.x + v.y * v.y; }

inline constexpr double kPi = 3.14159265358979323846;

/// The seven agent actions: five movement actions followed by the two
/// perception actions. Enum values double as indices of the policy head.
enum class Action : std::uint8_t {
  MoveForward = 0,
  MoveLeft = 1,
  MoveRight = 2,
  RotateLeft = 3,
  RotateRight = 4,
  Annotate = 5,
  Collect = 6,
};

inline constexpr int kActionCount = 7;
inline constexpr int kMovementActionCount = 5;

inline constexpr std::array<Action, kMovementActionCount> kMovementActions = {
    Action::MoveForward, Action::MoveLeft, Action::MoveRight,
    Action::RotateLeft, Action::RotateRight};

inline bool is_movement(Action a) {
  return static_cast<int>(a) < kMovementActionCount;
}
inline bool is_perception(Action a) { return !is_movement(a); }

std::string_view action_name(Action a);
Action action_from_name(std::string_view name);

}  // namespace embal

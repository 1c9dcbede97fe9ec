#include "rbi/error.hpp"

// Anchors the exception vtables in this translation unit.
namespace rbi {}

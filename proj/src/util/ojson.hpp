#pragma once

#include <json.hpp>  // vendored nlohmann/json

namespace forge {

// Insertion-ordered JSON; every file format we emit has a fixed key order.
using Json = nlohmann::ordered_json;

}  // namespace forge

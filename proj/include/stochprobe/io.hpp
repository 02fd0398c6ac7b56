#pragma once

// JSON documents: problem specs, kernel instances, policy and block trees.
//
// Problem form:
//   {"kind":"probemax","m":1,"items":[{"pmf":[[0,0.5],[10,0.5]],"cost":0}]}
// Kernel form:
//   {"levels":2,"T":1,"terminal":[0,1],
//    "actions":[{"id":"a","group":"a","rows":[[0,[[0,0.5],[1,0.5]],0.0]]}]}
// Levels without a row stay put and pay nothing.

#include <string>
#include <variant>

#include <json.hpp>

#include "stochprobe/block.hpp"
#include "stochprobe/problems.hpp"

namespace stochprobe {

using Document = std::variant<ProblemSpec, Instance>;

// Throws ParseError naming the line/column or the offending field.
Document parse_instance(const std::string& text);
ProblemSpec parse_spec(const nlohmann::json& doc);
Instance parse_kernel(const nlohmann::json& doc);

nlohmann::json to_json(const ProblemSpec& spec);
nlohmann::json to_json(const Instance& instance);
std::string serialize(const ProblemSpec& spec);
std::string serialize(const Instance& instance);

// Problem documents are compiled with build_instance.
Instance instance_of(const Document& doc);

nlohmann::json policy_to_json(const Instance& instance, const PolicyTree& tree);
nlohmann::json block_tree_to_json(const Instance& instance, const BlockTree& tree);

// Accepts {"nodes":[...]} or {"blocks":[...]}; block trees are expanded with
// to_policy. The result is validated against the instance.
PolicyTree parse_policy(const Instance& instance, const std::string& text);

std::string read_file(const std::string& path);  // throws ParseError
void write_file(const std::string& path, const std::string& text);

}  // namespace stochprobe

#include "stochprobe/io.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace stochprobe {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ParseError(field + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& at) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(at.empty() ? key : at + "." + key, "missing");
  return *it;
}

double number(const json& v, const std::string& field) {
  if (!v.is_number()) fail(field, "expected a number");
  return v.get<double>();
}

int integer(const json& v, const std::string& field) {
  if (!v.is_number_integer()) fail(field, "expected an integer");
  return v.get<int>();
}

std::string text(const json& v, const std::string& field) {
  if (!v.is_string()) fail(field, "expected a string");
  return v.get<std::string>();
}

Pmf parse_pmf(const json& v, const std::string& field) {
  if (!v.is_array() || v.empty()) fail(field, "expected a non-empty array of [outcome, probability]");
  Pmf pmf;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string at = field + "[" + std::to_string(i) + "]";
    const json& e = v[i];
    if (!e.is_array() || e.size() != 2) fail(at, "expected [outcome, probability]");
    const double x = number(e[0], at + "[0]");
    const double p = number(e[1], at + "[1]");
    if (p < 0.0) fail(at, "negative probability");
    pmf.entries.emplace_back(x, p);
  }
  try {
    validate_pmf(pmf, field);
  } catch (const ParameterError& e) {
    throw ParseError(e.what());
  }
  return pmf;
}

json pmf_json(const Pmf& pmf) {
  json out = json::array();
  for (const auto& [x, p] : pmf.entries) out.push_back({x, p});
  return out;
}

std::pair<int, int> line_col(const std::string& s, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < s.size(); ++i) {
    if (s[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte);
    throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                     e.what());
  }
}

}  // namespace

ProblemSpec parse_spec(const json& doc) {
  if (!doc.is_object()) fail("document", "expected an object");
  ProblemSpec spec;
  try {
    spec.kind = parse_problem_kind(text(require(doc, "kind", ""), "kind"));
  } catch (const ParameterError& e) {
    fail("kind", e.what());
  }
  const json& items = require(doc, "items", "");
  if (!items.is_array()) fail("items", "expected an array");
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string at = "items[" + std::to_string(i) + "]";
    const json& it = items[i];
    if (!it.is_object()) fail(at, "expected an object");
    Item item;
    item.pmf = parse_pmf(require(it, "pmf", at), at + ".pmf");
    if (it.contains("cost")) item.cost = number(it["cost"], at + ".cost");
    if (it.contains("profit")) item.profit = number(it["profit"], at + ".profit");
    spec.items.push_back(std::move(item));
  }
  if (doc.contains("m")) spec.m = integer(doc["m"], "m");
  if (doc.contains("k")) spec.k = integer(doc["k"], "k");
  if (doc.contains("target")) spec.target = number(doc["target"], "target");
  if (doc.contains("capacity")) spec.capacity = number(doc["capacity"], "capacity");
  if (doc.contains("eps")) spec.eps = number(doc["eps"], "eps");
  if (doc.contains("step")) spec.step = number(doc["step"], "step");
  if (doc.contains("theta")) spec.theta = number(doc["theta"], "theta");
  if (doc.contains("small_cut")) spec.small_cut = number(doc["small_cut"], "small_cut");
  if (doc.contains("max_ref")) spec.max_ref = number(doc["max_ref"], "max_ref");
  if (doc.contains("compress_levels")) {
    if (!doc["compress_levels"].is_boolean()) fail("compress_levels", "expected a boolean");
    spec.compress_levels = doc["compress_levels"].get<bool>();
  }
  try {
    validate_spec(spec);
  } catch (const ParameterError& e) {
    throw ParseError(e.what());
  }
  return spec;
}

Instance parse_kernel(const json& doc) {
  if (!doc.is_object()) fail("document", "expected an object");
  Instance inst;
  const int K = integer(require(doc, "levels", ""), "levels");
  if (K < 1) fail("levels", "must be >= 1");
  inst.values.levels = K;
  inst.horizon = integer(require(doc, "T", ""), "T");
  if (inst.horizon < 1) fail("T", "must be >= 1");
  if (doc.contains("start")) inst.start_level = integer(doc["start"], "start");
  if (inst.start_level < 0 || inst.start_level >= K) fail("start", "level out of range");
  if (doc.contains("kind")) inst.kind = text(doc["kind"], "kind");
  const json& terminal = require(doc, "terminal", "");
  if (!terminal.is_array() || static_cast<int>(terminal.size()) != K)
    fail("terminal", "expected " + std::to_string(K) + " numbers");
  inst.terminal.resize(K);
  for (int i = 0; i < K; ++i) inst.terminal[i] = number(terminal[i], "terminal[" + std::to_string(i) + "]");
  if (doc.contains("rep")) {
    const json& rep = doc["rep"];
    if (!rep.is_array() || static_cast<int>(rep.size()) != K)
      fail("rep", "expected " + std::to_string(K) + " numbers");
    for (int i = 0; i < K; ++i) inst.values.rep.push_back(number(rep[i], "rep[" + std::to_string(i) + "]"));
  }
  const json& actions = require(doc, "actions", "");
  if (!actions.is_array()) fail("actions", "expected an array");
  std::map<std::string, int> ids;
  for (std::size_t a = 0; a < actions.size(); ++a) {
    const std::string at = "actions[" + std::to_string(a) + "]";
    const json& act = actions[a];
    if (!act.is_object()) fail(at, "expected an object");
    const std::string id = text(require(act, "id", at), at + ".id");
    if (!ids.emplace(id, static_cast<int>(a)).second) fail(at + ".id", "duplicate id '" + id + "'");
    std::string group = act.contains("group") ? text(act["group"], at + ".group") : std::string();
    std::vector<std::vector<std::pair<int, double>>> rows(K);
    std::vector<char> seen(K, 0);
    Eigen::VectorXd profit = Eigen::VectorXd::Zero(K);
    const json& rs = require(act, "rows", at);
    if (!rs.is_array()) fail(at + ".rows", "expected an array");
    for (std::size_t r = 0; r < rs.size(); ++r) {
      const std::string rat = at + ".rows[" + std::to_string(r) + "]";
      const json& row = rs[r];
      if (!row.is_array() || row.size() < 2 || row.size() > 3)
        fail(rat, "expected [from, [[to, p], ...], g]");
      const int from = integer(row[0], rat + "[0]");
      if (from < 0 || from >= K) fail(rat + "[0]", "level out of range");
      if (seen[from]) fail(rat, "duplicate row for level " + std::to_string(from));
      seen[from] = 1;
      const json& entries = row[1];
      if (!entries.is_array()) fail(rat + "[1]", "expected an array");
      double total = 0.0;
      for (std::size_t e = 0; e < entries.size(); ++e) {
        const std::string eat = rat + "[1][" + std::to_string(e) + "]";
        if (!entries[e].is_array() || entries[e].size() != 2) fail(eat, "expected [to, p]");
        const int to = integer(entries[e][0], eat + "[0]");
        const double p = number(entries[e][1], eat + "[1]");
        if (to < 0 || to >= K) fail(eat + "[0]", "level out of range");
        if (p < 0.0) fail(eat + "[1]", "negative probability");
        rows[from].emplace_back(to, p);
        total += p;
      }
      if (std::abs(total - 1.0) > kTolerance)
        fail(rat, "probabilities sum to " + std::to_string(total));
      if (row.size() == 3) profit[from] = number(row[2], rat + "[2]");
    }
    for (int I = 0; I < K; ++I)
      if (!seen[I]) rows[I].emplace_back(I, 1.0);
    ActionSpec spec = make_action(id, std::move(group), K, rows, profit);
    if (act.contains("meta")) {
      const json& m = act["meta"];
      if (!m.is_object()) fail(at + ".meta", "expected an object");
      ActionMeta meta;
      if (m.contains("item")) meta.item = integer(m["item"], at + ".meta.item");
      if (m.contains("threshold")) meta.threshold = number(m["threshold"], at + ".meta.threshold");
      if (m.contains("cost")) meta.cost = number(m["cost"], at + ".meta.cost");
      if (m.contains("reward")) meta.reward = number(m["reward"], at + ".meta.reward");
      spec.meta = meta;
    }
    inst.actions.push_back(std::move(spec));
  }
  mark_compliance(inst);
  return inst;
}

Document parse_instance(const std::string& text) {
  const json doc = parse_text(text);
  if (!doc.is_object()) fail("document", "expected an object");
  if (doc.contains("actions") || doc.contains("levels")) return parse_kernel(doc);
  return parse_spec(doc);
}

json to_json(const ProblemSpec& spec) {
  json doc;
  doc["kind"] = to_string(spec.kind);
  doc["m"] = spec.m;
  doc["k"] = spec.k;
  doc["target"] = spec.target;
  doc["capacity"] = spec.capacity;
  doc["eps"] = spec.eps;
  if (spec.step) doc["step"] = *spec.step;
  if (spec.theta) doc["theta"] = *spec.theta;
  if (spec.small_cut) doc["small_cut"] = *spec.small_cut;
  if (spec.max_ref) doc["max_ref"] = *spec.max_ref;
  doc["compress_levels"] = spec.compress_levels;
  json items = json::array();
  for (const Item& it : spec.items) {
    json j;
    j["pmf"] = pmf_json(it.pmf);
    if (it.cost != 0.0) j["cost"] = it.cost;
    if (it.profit != 0.0) j["profit"] = it.profit;
    items.push_back(std::move(j));
  }
  doc["items"] = std::move(items);
  return doc;
}

json to_json(const Instance& inst) {
  const int K = inst.levels();
  json doc;
  doc["kind"] = inst.kind;
  doc["levels"] = K;
  doc["T"] = inst.horizon;
  doc["start"] = inst.start_level;
  doc["terminal"] = std::vector<double>(inst.terminal.data(), inst.terminal.data() + K);
  if (!inst.values.rep.empty()) doc["rep"] = inst.values.rep;
  json actions = json::array();
  for (const ActionSpec& a : inst.actions) {
    json act;
    act["id"] = a.id;
    act["group"] = a.group;
    json rows = json::array();
    for (int I = 0; I < K; ++I) {
      json entries = json::array();
      for (Transition::InnerIterator it(a.transition, I); it; ++it)
        entries.push_back({static_cast<int>(it.col()), it.value()});
      rows.push_back({I, std::move(entries), a.profit[I]});
    }
    act["rows"] = std::move(rows);
    if (a.meta) {
      act["meta"] = {{"item", a.meta->item},
                     {"threshold", a.meta->threshold},
                     {"cost", a.meta->cost},
                     {"reward", a.meta->reward}};
    }
    actions.push_back(std::move(act));
  }
  doc["actions"] = std::move(actions);
  return doc;
}

std::string serialize(const ProblemSpec& spec) { return to_json(spec).dump(2) + "\n"; }
std::string serialize(const Instance& instance) { return to_json(instance).dump(2) + "\n"; }

Instance instance_of(const Document& doc) {
  if (const auto* inst = std::get_if<Instance>(&doc)) return *inst;
  return build_instance(std::get<ProblemSpec>(doc));
}

json policy_to_json(const Instance& instance, const PolicyTree& tree) {
  json nodes = json::array();
  for (const PolicyNode& n : tree.nodes) {
    json j;
    j["action"] = n.is_leaf() ? json(nullptr) : json(instance.actions[n.action].id);
    j["level"] = n.level;
    j["time"] = n.time;
    json kids = json::array();
    for (const auto& [key, c] : n.children) kids.push_back({key, c});
    j["children"] = std::move(kids);
    nodes.push_back(std::move(j));
  }
  return json{{"nodes", std::move(nodes)}};
}

json block_tree_to_json(const Instance& instance, const BlockTree& tree) {
  json blocks = json::array();
  for (const BlockNode& b : tree.nodes) {
    json j;
    json items = json::array();
    for (int a : b.items) items.push_back(instance.actions[a].id);
    j["items"] = std::move(items);
    j["level"] = b.level;
    json kids = json::array();
    for (const auto& [key, c] : b.children) kids.push_back({key, c});
    j["children"] = std::move(kids);
    blocks.push_back(std::move(j));
  }
  return json{{"blocks", std::move(blocks)}};
}

namespace {

std::vector<std::pair<int, int>> parse_children(const json& v, const std::string& at) {
  if (!v.is_array()) fail(at, "expected an array of [key, index]");
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string e = at + "[" + std::to_string(i) + "]";
    if (!v[i].is_array() || v[i].size() != 2) fail(e, "expected [key, index]");
    out.emplace_back(integer(v[i][0], e + "[0]"), integer(v[i][1], e + "[1]"));
  }
  return out;
}

int lookup(const Instance& inst, const json& v, const std::string& at) {
  try {
    return inst.action_index(text(v, at));
  } catch (const ReferenceError& e) {
    fail(at, e.what());
  }
}

}  // namespace

PolicyTree parse_policy(const Instance& instance, const std::string& source) {
  const json doc = parse_text(source);
  if (!doc.is_object()) fail("document", "expected an object");
  if (doc.contains("blocks")) {
    const json& blocks = doc["blocks"];
    if (!blocks.is_array() || blocks.empty()) fail("blocks", "expected a non-empty array");
    BlockTree tree;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string at = "blocks[" + std::to_string(i) + "]";
      BlockNode b;
      const json& items = require(blocks[i], "items", at);
      if (!items.is_array()) fail(at + ".items", "expected an array");
      for (std::size_t k = 0; k < items.size(); ++k)
        b.items.push_back(lookup(instance, items[k], at + ".items[" + std::to_string(k) + "]"));
      b.level = integer(require(blocks[i], "level", at), at + ".level");
      if (blocks[i].contains("children"))
        b.children = parse_children(blocks[i]["children"], at + ".children");
      tree.nodes.push_back(std::move(b));
    }
    return to_policy(instance, tree);
  }
  const json& nodes = require(doc, "nodes", "");
  if (!nodes.is_array() || nodes.empty()) fail("nodes", "expected a non-empty array");
  PolicyTree tree;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string at = "nodes[" + std::to_string(i) + "]";
    PolicyNode n;
    const json& action = require(nodes[i], "action", at);
    n.action = action.is_null() ? kLeaf : lookup(instance, action, at + ".action");
    n.level = integer(require(nodes[i], "level", at), at + ".level");
    if (nodes[i].contains("time")) n.time = integer(nodes[i]["time"], at + ".time");
    if (nodes[i].contains("children"))
      n.children = parse_children(nodes[i]["children"], at + ".children");
    tree.nodes.push_back(std::move(n));
  }
  validate_policy(instance, tree);
  return tree;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot write '" + path + "'");
  out << contents;
}

}  // namespace stochprobe

#include "common.hpp"

#include <fstream>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa::agents {

using namespace detail;
using nlohmann::json;

namespace {

inline constexpr const char* kLoans = "loans";

char sniff_delimiter(const std::string& header) {
  for (char c : {'|', '\t', ';'}) {
    if (header.find(c) != std::string::npos) return c;
  }
  return ',';
}

// Rows of the document as loans-table values, loan_id left null when absent.
json read_document(const std::filesystem::path& file, const Schema& schema) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::ValidationError, "cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ValidationError, file.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const char delim = sniff_delimiter(line);
  std::vector<std::optional<std::size_t>> mapping;
  std::vector<bool> seen(schema.size(), false);
  for (const auto& h : util::split(line, delim)) {
    auto name = util::to_lower(util::trim(util::split(h, ':').front()));
    std::replace(name.begin(), name.end(), ' ', '_');
    auto idx = schema.index_of(name);
    if (idx) seen[*idx] = true;
    mapping.push_back(idx);
  }
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (!seen[c] && schema.at(c).name != "loan_id") {
      throw Error(ErrorCode::ValidationError, file.string() + " has no " + schema.at(c).name + " column");
    }
  }
  json rows = json::array();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (util::trim(line).empty()) continue;
    auto cells = util::split(line, delim);
    if (cells.size() != mapping.size()) {
      throw Error(ErrorCode::ValidationError, file.string() + ":" + std::to_string(lineno) + " has " +
                                                  std::to_string(cells.size()) + " cells");
    }
    std::vector<Value> values(schema.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!mapping[i]) continue;
      try {
        values[*mapping[i]] = parse_cell(util::trim(cells[i]), schema.at(*mapping[i]).type);
      } catch (const Error& e) {
        throw Error(ErrorCode::ValidationError, file.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    json row = json::array();
    for (const auto& v : values) row.push_back(value_to_json(v));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::shared_ptr<AgentPipeline> make_document_ingest_agent(const Services& s) {
  static const auto patterns = compile_all({
      {"ingest", "ingest|import|load|upload document|documents|file|files|loans|applications?"},
  });
  auto store = s.store;

  AgentManifest m;
  m.name = "document_ingest";
  m.description = "Reads delimited loan documents into the loans table";
  m.allowed_personas = everyone();

  auto nlu = understand("document_nlu", {"path"}, [](SkillFrame& f) {
    auto hit = intent::match(f.utterance.text, patterns);
    if (hit.intent.empty()) return;
    f.intent = hit.intent;
    f.confidence = hit.coverage;
    for (auto t : raw_tokens(f.utterance.text)) {
      while (!t.empty() && (t.back() == '.' || t.back() == ',' || t.back() == '?' || t.back() == '!')) t.pop_back();
      const auto ext = std::filesystem::path(t).extension().string();
      if (t.find('/') != std::string::npos || ext == ".csv" || ext == ".txt" || ext == ".tsv" || ext == ".psv") {
        f.set("path", t);
        return;
      }
    }
  });

  auto parse = act("content_analyzer", {"path"}, {"rows", "problem"}, [store](SkillFrame& f) {
    if (!f.get("path").is_string()) {
      f.set("problem", "Which document should I read? Please give its file path.");
      f.halted = true;
      return;
    }
    try {
      f.set("rows", read_document(f.get("path").get<std::string>(), store->schema(kLoans)));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ValidationError) throw;
      f.set("problem", std::string("I could not read that document: ") + e.what() + ".");
      f.halted = true;
    }
  });

  auto ingest = world_changing_act(
      "ingest_rows", {"rows"}, {},
      [store](SkillFrame& f) {
        const auto id_col = store->schema(kLoans).require("loan_id");
        std::int64_t next = 1;
        const auto snap = store->snapshot(kLoans);
        for (const auto& [id, row] : snap.rows()) next = std::max(next, std::get<std::int64_t>(row[id_col]) + 1);
        for (const auto& r : f.get("rows")) {
          std::vector<Value> values;
          for (const auto& v : r) values.push_back(value_from_json(v));
          if (is_null(values[id_col])) values[id_col] = next++;
          store->insert(kLoans, std::move(values));
        }
      },
      nullptr);

  auto reply = respond("document_reply", {"path", "rows", "problem"}, [](SkillFrame& f) {
    if (f.has("problem")) {
      f.text = f.get("problem").get<std::string>();
      return;
    }
    const auto n = std::to_string(f.get("rows").size());
    const auto path = f.get("path").get<std::string>();
    f.text = f.mode == Mode::Preview ? "Would ingest " + n + " loan applications from " + path
                                     : "Ingested " + n + " loan applications from " + path;
  });

  return compose_agent(std::move(m), std::move(nlu), {std::move(parse), std::move(ingest)}, std::move(reply),
                       {{"content_analyzer", {}}, {"ingest_rows", {}}}, s.ledger);
}

}  // namespace bpa::agents

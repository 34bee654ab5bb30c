#include "common.hpp"

#include <fstream>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa::agents {

using namespace detail;
using nlohmann::json;

nlq::Lexicon loans_lexicon(const Schema& schema) {
  nlq::Lexicon lex("loans", schema);
  lex.synonym("amount", "loan_amount")
      .synonym("credit", "credit_score")
      .synonym("income", "yearly_income")
      .synonym("annual income", "yearly_income")
      .synonym("salary", "yearly_income")
      .synonym("term", "term_months")
      .synonym("applicant", "borrower")
      .person_column("borrower");
  return lex;
}

nlq::Lexicon travel_lexicon(const Schema& schema) {
  nlq::Lexicon lex("travel_requests", schema);
  lex.synonym("amount", "requested_amount")
      .synonym("employee", "applicant")
      .value_phrase("pending", {"state", CmpOp::Eq, std::string("ManagerReview")})
      .value_phrase("approved", {"state", CmpOp::Eq, std::string("Approved")})
      .value_phrase("rejected", {"state", CmpOp::Eq, std::string("Rejected")})
      .person_column("applicant");
  return lex;
}

namespace {

std::string agg_word(AggKind k) {
  switch (k) {
    case AggKind::Sum: return "sum";
    case AggKind::Avg: return "average";
    case AggKind::Min: return "minimum";
    case AggKind::Max: return "maximum";
    default: return "count";
  }
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::filesystem::path export_path(const std::filesystem::path& dir, const SkillFrame& f, const std::string& query) {
  const auto key = f.ctx_in.session_id + "|" + std::to_string(f.utterance.turn_id) + "|" + query;
  return dir / ("result-" + util::hex64(util::fnv1a64(key)) + ".csv");
}

}  // namespace

std::shared_ptr<AgentPipeline> make_data_query_agent(const Services& s, nlq::Lexicon lexicon) {
  auto store = s.store;
  auto lex = std::make_shared<const nlq::Lexicon>(std::move(lexicon));
  const auto results_dir = s.results_dir;

  AgentManifest m;
  m.name = "data_query";
  m.description = "Natural-language questions over the " + lex->table() + " table";
  m.allowed_personas = everyone();

  auto nlu = understand("nlq_understand", {"query"}, [lex](SkillFrame& f) {
    nlq::ParseResult parsed;
    try {
      parsed = nlq::parse(f.utterance.text, *lex);
      bind(parsed.query, lex->schema());
    } catch (const Error&) {
      return;
    }
    f.intent = "query";
    f.confidence = parsed.coverage;
    f.set("query", to_canonical_text(parsed.query));
  });

  auto run = act("data_query", {"query"}, {"result", "error"}, [store, lex](SkillFrame& f) {
    const auto q = from_canonical_text(f.get("query").get<std::string>());
    try {
      auto r = store->query(q, lex->table());
      json plottable = {{"table", lex->table()}, {"query", to_canonical_text(q)}, {"result", result_to_json(r)}};
      if (q.group_by) plottable["group_by"] = *q.group_by;
      plottable["measure"] = agg_word(q.aggregation == AggKind::TopK ? q.by : q.aggregation) +
                             (q.target == "*" ? std::string() : " of " + q.target);
      f.put_context(std::string(kPlottableKey), plottable, kPlottableTtl);
      f.set("result", result_to_json(r));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyAggregation) throw;
      f.set("error", "There are no matching records to compute that over.");
    }
  });

  auto write_csv = [results_dir](SkillFrame& f, bool write) {
    if (!f.has("result")) return;
    const auto r = result_from_json(f.get("result"));
    if (r.shape != QueryResult::Shape::Rows || r.rows.size() <= kListInlineLimit) return;
    const auto path = export_path(results_dir, f, f.get("query").get<std::string>());
    if (write) {
      std::filesystem::create_directories(results_dir);
      std::ofstream out(path);
      for (std::size_t i = 0; i < r.columns.size(); ++i) out << (i ? "," : "") << csv_cell(r.columns[i]);
      out << '\n';
      for (const auto& row : r.rows) {
        for (std::size_t i = 0; i < row.values.size(); ++i) out << (i ? "," : "") << csv_cell(display(row.values[i]));
        out << '\n';
      }
      if (!out) throw Error(ErrorCode::SkillFailure, "cannot write " + path.string());
    }
    f.set("link", path.string());
  };
  auto exporter = world_changing_act(
      "export_results", {"query", "result"}, {"link"}, [write_csv](SkillFrame& f) { write_csv(f, true); },
      [write_csv](SkillFrame& f) { write_csv(f, false); });

  auto reply = respond("query_reply", {"query", "result", "error", "link"}, [](SkillFrame& f) {
    if (f.has("error")) {
      f.text = f.get("error").get<std::string>();
      return;
    }
    const auto q = from_canonical_text(f.get("query").get<std::string>());
    const auto r = result_from_json(f.get("result"));
    switch (r.shape) {
      case QueryResult::Shape::Scalar: {
        const double v = r.scalar.value_or(0);
        f.text = "The " + agg_word(q.aggregation) + " value is " +
                 (q.aggregation == AggKind::Count ? plain_number(v) : util::format_real(v));
        return;
      }
      case QueryResult::Shape::Rows: {
        if (r.rows.empty()) {
          f.text = "No records match your query.";
          return;
        }
        if (f.has("link")) {
          const auto link = f.get("link").get<std::string>();
          f.text = "Total records found are " + std::to_string(r.rows.size()) + ". Here is the link: " + link;
          f.attachment = Attachment{Attachment::Kind::Link, link, {}, "text/csv", "query result"};
          return;
        }
        TableData t;
        t.columns = r.columns;
        for (const auto& row : r.rows) {
          std::vector<std::string> cells;
          for (const auto& v : row.values) cells.push_back(display(v));
          t.rows.push_back(std::move(cells));
        }
        f.text = "The result for your query is:";
        f.attachment = Attachment{Attachment::Kind::Table, {}, std::move(t), {}, to_canonical_text(q)};
        return;
      }
      case QueryResult::Shape::Grouped: {
        const auto word = agg_word(q.aggregation == AggKind::TopK ? q.by : q.aggregation);
        if (r.groups.empty()) {
          f.text = "No records match your query.";
          return;
        }
        if (q.having) {
          std::string text = "These are the value: ";
          for (std::size_t i = 0; i < r.groups.size(); ++i) {
            text += (i ? ", " : "") + std::to_string(i + 1) + "). " + word + " of " + display(r.groups[i].first) +
                    " is " + plain_number(r.groups[i].second) + "$";
          }
          f.text = std::move(text);
          return;
        }
        TableData t;
        t.columns = {q.group_by.value_or("group"), word + (q.target == "*" ? std::string() : " " + q.target)};
        for (const auto& [k, v] : r.groups) t.rows.push_back({display(k), plain_number(v)});
        f.text = "The result for your query is:";
        f.attachment = Attachment{Attachment::Kind::Table, {}, std::move(t), {}, to_canonical_text(q)};
        return;
      }
    }
  });

  return compose_agent(std::move(m), std::move(nlu), {std::move(run), std::move(exporter)}, std::move(reply),
                       {{"data_query", {}}, {"export_results", {}}}, s.ledger);
}

}  // namespace bpa::agents

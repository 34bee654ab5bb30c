#include "common.hpp"

#include "bpa/util.hpp"

namespace bpa::agents {

using namespace detail;
using nlohmann::json;

namespace {

std::string text_at(const Table& t, const std::vector<Value>& row, const std::string& column) {
  const auto& v = row[t.schema().require(column)];
  return is_null(v) ? std::string() : display(v);
}

}  // namespace

std::shared_ptr<AgentPipeline> make_publication_query_agent(const Services& s) {
  static const auto patterns = compile_all({
      {"count_papers", "number|many|count accepted? papers|publications {author:NAME}"},
  });
  auto store = s.store;

  AgentManifest m;
  m.name = "publication_query";
  m.description = "Accepted-paper counts for employees";
  m.allowed_personas = everyone();

  auto nlu = understand("publication_nlu", {"author"}, [](SkillFrame& f) {
    auto hit = intent::match(f.utterance.text, patterns);
    if (hit.intent.empty() || !hit.entities.count("author")) return;
    f.intent = hit.intent;
    f.confidence = hit.coverage;
    f.set("author", hit.entities.at("author"));
  });

  auto directory = act("employee_directory", {"author"}, {"employee"}, [store](SkillFrame& f) {
    const auto who = lower(f.get("author").get<std::string>());
    const auto employees = store->snapshot("employees");
    std::vector<std::string> found;
    for (const auto& [id, row] : employees.rows()) {
      const auto name = text_at(employees, row, "name");
      const auto l = lower(name);
      if (l == who) {
        found = {name};
        break;
      }
      if (l.starts_with(who + " ")) found.push_back(name);
    }
    if (found.size() != 1) {
      f.text = "I could not find an employee named " + f.get("author").get<std::string>() + " in the directory.";
      f.confidence = 0.1;
      f.halted = true;
      return;
    }
    f.set("employee", found.front());
  });

  auto papers = act("publication_lookup", {"employee"}, {"count"}, [store](SkillFrame& f) {
    const auto name = f.get("employee").get<std::string>();
    const auto pubs = store->snapshot("publications");
    std::int64_t n = 0;
    for (const auto& [id, row] : pubs.rows()) {
      n += text_at(pubs, row, "author") == name && text_at(pubs, row, "status") == "accepted";
    }
    f.set("count", n);
  });

  auto reply = respond("publication_reply", {"employee", "count"}, [](SkillFrame& f) {
    if (f.text) return;
    f.text = "The number of accepted papers by " + f.get("employee").get<std::string>() + " is " +
             std::to_string(f.get("count").get<std::int64_t>());
  });

  return compose_agent(std::move(m), std::move(nlu), {std::move(directory), std::move(papers)}, std::move(reply),
                       {{"employee_directory", {}}, {"publication_lookup", {}}}, s.ledger);
}

}  // namespace bpa::agents

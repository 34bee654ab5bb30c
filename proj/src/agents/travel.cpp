#include "common.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa::agents {

using namespace detail;

namespace {

std::chrono::sys_days parse_date(std::string_view s) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char sep1 = 0;
  char sep2 = 0;
  const std::string text(s);
  if (std::sscanf(text.c_str(), "%4d%c%2u%c%2u", &y, &sep1, &m, &sep2, &d) != 5 || sep1 != sep2 ||
      (sep1 != '/' && sep1 != '-')) {
    throw Error(ErrorCode::ValidationError, "not a date: '" + text + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(m), std::chrono::day(d)};
  if (!ymd.ok()) throw Error(ErrorCode::ValidationError, "not a date: '" + text + "'");
  return std::chrono::sys_days(ymd);
}

}  // namespace

int days_between(std::string_view from, std::string_view to) {
  return static_cast<int>((parse_date(to) - parse_date(from)).count());
}

double stub_fare(std::string_view origin, std::string_view destination, std::string_view depart,
                 std::string_view ret) {
  const int days = days_between(depart, ret);
  if (days < 0) throw Error(ErrorCode::ValidationError, "return date is before departure");
  const auto route = util::fnv1a64(std::string(origin) + "-" + std::string(destination));
  return 180.0 + static_cast<double>(route % 320) + 9.0 * days;
}

std::shared_ptr<AgentPipeline> make_travel_estimation_agent(const Services& s) {
  static const auto patterns = compile_all({
      {"estimate_flight", "flight*|fare*|fly|airfare {origin:CODE} {destination:CODE} {depart:DATE}? {return:DATE}?"},
  });

  AgentManifest m;
  m.name = "travel_estimation";
  m.description = "Flight price estimates";
  m.allowed_personas = everyone();

  auto nlu = understand("travel_nlu", {"origin", "destination", "depart", "return"}, [](SkillFrame& f) {
    auto hit = intent::match(f.utterance.text, patterns);
    if (hit.intent.empty()) return;
    f.intent = hit.intent;
    f.confidence = hit.coverage;
    for (const auto& [slot, value] : hit.entities) f.set(slot, value);
  });

  auto pricing = act("travel_pricing", {"origin", "destination", "depart", "return"}, {"fare", "question"},
                     [](SkillFrame& f) {
                       if (!f.has("depart")) {
                         f.set("question", "When would you like to leave? Please give the date as yyyy/mm/dd.");
                         return;
                       }
                       if (!f.has("return")) {
                         f.set("question", "When would you like to return? Please give the date as yyyy/mm/dd.");
                         return;
                       }
                       const auto get = [&](const char* k) { return f.get(k).get<std::string>(); };
                       try {
                         f.set("fare", stub_fare(get("origin"), get("destination"), get("depart"), get("return")));
                       } catch (const Error&) {
                         f.set("question", "The return date is before the departure date. When would you like to return?");
                       }
                     });

  auto reply = respond("travel_reply", {"origin", "destination", "depart", "return", "fare", "question"},
                       [](SkillFrame& f) {
                         if (f.has("question")) {
                           f.text = f.get("question").get<std::string>();
                           return;
                         }
                         const auto get = [&](const char* k) { return f.get(k).get<std::string>(); };
                         f.text = "The cheapest round trip from " + get("origin") + " to " + get("destination") +
                                  " leaving on " + get("depart") + " and returning on " + get("return") + " costs " +
                                  plain_number(f.get("fare").get<double>()) + "$";
                       });

  return compose_agent(std::move(m), std::move(nlu), {std::move(pricing)}, std::move(reply), {{"travel_pricing", {}}},
                       s.ledger);
}

}  // namespace bpa::agents

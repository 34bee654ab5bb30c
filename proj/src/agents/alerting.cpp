#include "common.hpp"

#include <regex>

#include "bpa/error.hpp"

namespace bpa::agents {

using namespace detail;
using nlohmann::json;

namespace {

std::string describe(const QueryResult& r) {
  if (r.shape == QueryResult::Shape::Scalar) return plain_number(r.scalar.value_or(0));
  return summarize(r);
}

}  // namespace

std::shared_ptr<AgentPipeline> make_alerting_agent(const Services& s, std::vector<nlq::Lexicon> lexicons) {
  static const auto patterns = compile_all({
      {"create_alert", "alert|notify|warn|tell me? when|if|whenever|once"},
      {"list_alerts", "list|show my? alerts"},
      {"delete_alert", "delete|remove|cancel|drop alert"},
      {"set_channel", "send|deliver|route my? alerts|notifications to|via|through|by? console|file|webhook|terminal"},
  });
  auto store = s.store;
  auto registry = s.alerts;
  auto lex = std::make_shared<const std::vector<nlq::Lexicon>>(std::move(lexicons));

  AgentManifest m;
  m.name = "alerting";
  m.description = "Alerts on data changes, created in natural language";
  m.allowed_personas = everyone();

  auto nlu = understand("alert_nlu", {"condition", "trigger_id", "channel", "target"}, [](SkillFrame& f) {
    auto hit = intent::match(f.utterance.text, patterns);
    if (hit.intent.empty()) return;
    f.intent = hit.intent;
    f.confidence = hit.coverage;
    const auto raw = raw_tokens(f.utterance.text);
    const auto ws = words(f.utterance.text);
    if (f.intent == "create_alert") {
      for (std::size_t i = 0; i < ws.size(); ++i) {
        if (ws[i] != "when" && ws[i] != "if" && ws[i] != "whenever" && ws[i] != "once") continue;
        std::string cond;
        for (std::size_t j = i + 1; j < raw.size(); ++j) cond += (cond.empty() ? "" : " ") + raw[j];
        f.set("condition", cond);
        break;
      }
    } else if (f.intent == "delete_alert") {
      static const std::regex id(R"(^[Tt](\d+)$)");
      for (const auto& w : ws) {
        std::smatch sm;
        if (std::regex_match(w, sm, id)) f.set("trigger_id", "T" + sm[1].str());
      }
    } else if (f.intent == "set_channel") {
      for (const auto& w : ws) {
        if (w == "console" || w == "terminal") f.set("channel", "console");
        if (w == "file" || w == "webhook") f.set("channel", w);
      }
      for (const auto& t : raw) {
        if (t.starts_with("http://")) f.set("target", t);
      }
    }
  });

  auto resolve = act("nlq_condition", {"condition"}, {"query", "problem"}, [lex](SkillFrame& f) {
    std::optional<std::pair<nlq::ParseResult, std::string>> best;
    if (f.get("condition").is_string()) {
      for (const auto& l : *lex) {
        try {
          auto parsed = nlq::parse(f.get("condition").get<std::string>(), l);
          bind(parsed.query, l.schema());
          if (!best || parsed.coverage > best->first.coverage) best = std::make_pair(parsed, l.table());
        } catch (const Error&) {
        }
      }
    }
    if (!best) {
      f.set("problem", "I could not understand the alert condition. Could you rephrase it?");
      f.halted = true;
      return;
    }
    auto q = best->first.query;
    if (q.aggregation == AggKind::List) q.aggregation = AggKind::Count;
    f.set("query", {{"canonical", to_canonical_text(q)}, {"table", best->second}});
  });

  auto create = world_changing_act(
      "register_trigger", {"query"}, {"trigger", "problem"},
      [store, registry](SkillFrame& f) {
        const auto& q = f.get("query");
        const auto query = from_canonical_text(q.at("canonical").get<std::string>());
        const auto table = q.at("table").get<std::string>();
        try {
          auto t = registry->register_trigger(f.utterance.user_id, query, table);
          f.set("trigger", {{"id", t.trigger_id}, {"current", describe(store->query(query, table))}});
        } catch (const Error& e) {
          if (e.code() != ErrorCode::EmptyAggregation && e.code() != ErrorCode::BindError) throw;
          f.set("problem", std::string("That alert cannot be evaluated: ") + e.what() + ".");
        }
      },
      nullptr);

  auto remove = world_changing_act(
      "remove_trigger", {"trigger_id"}, {"problem"},
      [registry](SkillFrame& f) {
        if (!f.get("trigger_id").is_string()) {
          f.set("problem", "Which alert should I delete? Please give its id, for example T1.");
          return;
        }
        try {
          registry->remove(f.get("trigger_id").get<std::string>(), f.utterance.user_id);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::UnknownTrigger) throw;
          f.set("problem", "I could not find alert " + f.get("trigger_id").get<std::string>() + ".");
        }
      },
      [registry](SkillFrame& f) {
        if (!f.get("trigger_id").is_string()) {
          f.set("problem", "Which alert should I delete? Please give its id, for example T1.");
          return;
        }
        const auto id = f.get("trigger_id").get<std::string>();
        auto t = registry->get(id);
        if (!t || !t->active || t->owner != f.utterance.user_id) f.set("problem", "I could not find alert " + id + ".");
      });

  auto channel_check = [](SkillFrame& f) {
    if (!f.get("channel").is_string()) {
      f.set("problem", "Which channel should I use: console, file or webhook?");
    } else if (f.get("channel") == "webhook" && !f.get("target").is_string()) {
      f.set("problem", "Please include the webhook URL, starting with http://.");
    }
  };
  auto channel = world_changing_act(
      "set_channel", {"channel", "target"}, {"problem"},
      [registry, channel_check](SkillFrame& f) {
        channel_check(f);
        if (f.has("problem")) return;
        const auto target = f.get("target").is_string() ? f.get("target").get<std::string>() : std::string();
        registry->set_channel(f.utterance.user_id, channel_from_string(f.get("channel").get<std::string>()), target);
      },
      channel_check);

  auto list = act("list_triggers", {}, {"alerts"}, [registry](SkillFrame& f) {
    json out = json::array();
    for (const auto& t : registry->list(f.utterance.user_id)) {
      out.push_back({{"id", t.trigger_id},
                     {"query", to_canonical_text(t.query)},
                     {"table", t.table},
                     {"channel", to_string(t.channel)}});
    }
    f.set("alerts", out);
  });

  auto reply = respond("alert_reply", {"query", "trigger", "problem", "alerts", "trigger_id", "channel", "target"},
                       [](SkillFrame& f) {
                         if (f.has("problem")) {
                           f.text = f.get("problem").get<std::string>();
                           return;
                         }
                         const bool preview = f.mode == Mode::Preview;
                         if (f.intent == "create_alert") {
                           const auto& q = f.get("query");
                           const auto what = q.at("canonical").get<std::string>() + " on " +
                                             q.at("table").get<std::string>();
                           f.text = preview ? "Would create an alert for " + what
                                            : "Alert " + f.get("trigger").at("id").get<std::string>() +
                                                  " created. I will notify you when " + what + " changes (currently " +
                                                  f.get("trigger").at("current").get<std::string>() + ").";
                         } else if (f.intent == "list_alerts") {
                           const auto& alerts = f.get("alerts");
                           if (alerts.empty()) {
                             f.text = "You have no alerts.";
                             return;
                           }
                           std::string text = "Your alerts: ";
                           for (std::size_t i = 0; i < alerts.size(); ++i) {
                             const auto& a = alerts[i];
                             text += (i ? ", " : "") + std::to_string(i + 1) + "). " + a.at("id").get<std::string>() +
                                     ": " + a.at("query").get<std::string>() + " on " +
                                     a.at("table").get<std::string>() + " via " + a.at("channel").get<std::string>();
                           }
                           f.text = std::move(text);
                         } else if (f.intent == "delete_alert") {
                           const auto id = f.get("trigger_id").get<std::string>();
                           f.text = preview ? "Would delete alert " + id : "Alert " + id + " deleted";
                         } else {
                           const auto ch = f.get("channel").get<std::string>();
                           f.text = preview ? "Would send your alerts via " + ch
                                            : "Your alerts will be sent via " + ch;
                         }
                       });

  return compose_agent(std::move(m), std::move(nlu),
                       {std::move(resolve), std::move(create), std::move(remove), std::move(channel), std::move(list)},
                       std::move(reply),
                       {{"nlq_condition", {"create_alert"}},
                        {"register_trigger", {"create_alert"}},
                        {"remove_trigger", {"delete_alert"}},
                        {"set_channel", {"set_channel"}},
                        {"list_triggers", {"list_alerts"}}},
                       s.ledger);
}

}  // namespace bpa::agents

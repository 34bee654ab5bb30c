#include "common.hpp"

#include <map>

#include "bpa/error.hpp"

namespace bpa::agents {

using namespace detail;
using nlohmann::json;

const std::vector<std::string>& loan_slots() {
  static const std::vector<std::string> slots = {"amount", "credit_score", "yearly_salary", "term_months"};
  return slots;
}

const std::string& loan_question(const std::string& slot) {
  static const std::map<std::string, std::string> q = {
      {"amount", "What is the loan amount?"},
      {"credit_score", "What is the credit score?"},
      {"yearly_salary", "What is the annual salary (in USD)"},
      {"term_months", "In how many months will the loan be paid back?"},
  };
  return q.at(slot);
}

namespace {

inline constexpr double kInDialogConfidence = 0.9;

std::optional<double> first_number(std::string_view text) {
  for (const auto& w : words(text)) {
    if (auto v = nlq::parse_number(w)) return as_number(*v);
  }
  return std::nullopt;
}

}  // namespace

std::shared_ptr<AgentPipeline> make_loan_rules_agent(const Services& s) {
  static const auto start = compile_all({
      {"start", "process|assess|evaluate|check application|request? loan {amount:NUMBER}?"},
  });
  static const auto cancel = compile_all({{"cancel", "cancel|stop|abort|quit"}});
  const std::string key(kLoanDialogKey);

  AgentManifest m;
  m.name = "loan_rules";
  m.description = "Business rules for loan applications";
  m.allowed_personas = everyone();

  auto nlu = understand("loan_nlu", {"dialog", "answer"}, [key](SkillFrame& f) {
    if (const auto* d = f.ctx_in.find(key)) {
      f.set("dialog", d->value);
      f.confidence = kInDialogConfidence;
      f.intent = intent::match(f.utterance.text, cancel).intent.empty() ? "answer" : "cancel";
      if (auto v = first_number(f.utterance.text)) f.set("answer", *v);
      return;
    }
    auto hit = intent::match(f.utterance.text, start);
    if (hit.intent.empty()) return;
    f.intent = hit.intent;
    f.confidence = hit.coverage;
    json dialog = {{"pending", loan_slots()}, {"filled", json::object()}, {"depth", 0}};
    f.set("dialog", dialog);
    if (hit.entities.count("amount")) f.set("answer", std::stod(hit.entities.at("amount")));
  });

  auto dialog = act("slot_filling", {"dialog", "answer"}, {"reply"}, [key](SkillFrame& f) {
    json d = f.get("dialog");
    if (f.intent == "cancel") {
      f.erase_context(key);
      f.dialog_depth = 0;
      f.set("reply", "Okay, I have cancelled the loan assessment.");
      return;
    }
    auto pending = d.at("pending").get<std::vector<std::string>>();
    if (f.has("answer") && !pending.empty()) {
      d["filled"][pending.front()] = f.get("answer").get<double>();
      pending.erase(pending.begin());
      d["pending"] = pending;
      d["depth"] = d.at("depth").get<int>() + 1;
    }
    f.dialog_depth = d.at("depth").get<int>();
    if (!pending.empty()) {
      f.put_context(key, d, std::nullopt);
      f.set("reply", loan_question(pending.front()));
      return;
    }
    f.erase_context(key);
    const auto& v = d.at("filled");
    LoanAssessmentInput in;
    in.amount = v.at("amount").get<double>();
    in.credit_score = static_cast<std::int64_t>(v.at("credit_score").get<double>());
    in.yearly_salary = v.at("yearly_salary").get<double>();
    in.term_months = static_cast<std::int64_t>(v.at("term_months").get<double>());
    try {
      const auto verdict = assess_loan(in);
      f.set("reply", verdict.risk == Risk::HighRisk ? "High risk loan. This loan request should not be approved"
                                                    : "Low risk loan. This loan request can be approved");
    } catch (const Error& e) {
      f.set("reply", std::string("I cannot assess this loan: ") + e.what() + ".");
    }
  });

  auto reply = respond("loan_reply", {"reply"}, [](SkillFrame& f) { f.text = f.get("reply").get<std::string>(); });

  return compose_agent(std::move(m), std::move(nlu), {std::move(dialog)}, std::move(reply), {{"slot_filling", {}}},
                       s.ledger);
}

}  // namespace bpa::agents

#include "common.hpp"

#include <map>

namespace bpa::agents {

using namespace detail;

std::shared_ptr<AgentPipeline> make_chitchat_agent(const std::string& assistant_name, const std::string& capabilities,
                                                   std::shared_ptr<SideEffectLedger> ledger) {
  static const auto patterns = compile_all({
      {"greeting", "hello|hi|hey|greetings there|everyone?"},
      {"how_are_you", "how are you"},
      {"who_are_you", "who are you"},
      {"who_are_you", "what|who is your name"},
      {"how_can_you_help", "how can you help"},
      {"how_can_you_help", "what can you do"},
      {"what_are_you_doing", "what are you doing"},
      {"joke", "tell|know joke"},
      {"goodbye", "goodbye|bye|farewell"},
      {"goodbye", "see you later|soon"},
      {"thanks", "thanks|thank"},
  });
  const std::map<std::string, std::string> replies = {
      {"greeting", "Hi there"},
      {"how_are_you", "I am doing well, thank you for asking."},
      {"who_are_you", "I am " + assistant_name + ", a conversational assistant for your business processes."},
      {"how_can_you_help", "I can help you with " + capabilities + "."},
      {"what_are_you_doing", "I am waiting for your next request."},
      {"joke", "Why did the travel request cross the road? To get to the director's desk."},
      {"goodbye", "Goodbye! Have a great day."},
      {"thanks", "You are welcome."},
  };

  AgentManifest m;
  m.name = "chitchat";
  m.description = "Greetings, identity questions and small talk";
  m.allowed_personas = everyone();

  auto nlu = understand("dialog_tree_nlu", {}, [](SkillFrame& f) {
    auto hit = intent::match(f.utterance.text, patterns);
    f.intent = hit.intent;
    f.confidence = hit.coverage;
  });
  auto reply = respond("dialog_tree_reply", {}, [replies](SkillFrame& f) { f.text = replies.at(f.intent); });
  return compose_agent(std::move(m), std::move(nlu), {}, std::move(reply), {}, std::move(ledger));
}

}  // namespace bpa::agents

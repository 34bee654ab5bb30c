#include "bpa/contracts.hpp"

#include <algorithm>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa {

using nlohmann::json;

std::string_view to_string(Persona p) noexcept {
  switch (p) {
    case Persona::Employee: return "Employee";
    case Persona::Manager: return "Manager";
    case Persona::Director: return "Director";
    case Persona::LoanOfficer: return "LoanOfficer";
  }
  return "?";
}

Persona persona_from_string(std::string_view s) {
  std::string key;
  for (char c : s) {
    if (c != ' ' && c != '_') key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  for (Persona p : all_personas()) {
    if (util::to_lower(to_string(p)) == key) return p;
  }
  throw Error(ErrorCode::Serialization, "unknown persona '" + std::string(s) + "'");
}

const std::vector<Persona>& all_personas() {
  static const std::vector<Persona> all = {Persona::Employee, Persona::Manager, Persona::Director,
                                           Persona::LoanOfficer};
  return all;
}

std::string_view to_string(Mode m) noexcept { return m == Mode::Preview ? "preview" : "execute"; }

Mode mode_from_string(std::string_view s) {
  if (s == "preview") return Mode::Preview;
  if (s == "execute") return Mode::Execute;
  throw Error(ErrorCode::Serialization, "unknown mode '" + std::string(s) + "'");
}

std::string_view to_string(SkillRole r) noexcept {
  switch (r) {
    case SkillRole::Understand: return "understand";
    case SkillRole::Act: return "act";
    case SkillRole::Respond: return "respond";
  }
  return "?";
}

std::string_view to_string(Attachment::Kind k) noexcept {
  switch (k) {
    case Attachment::Kind::Image: return "image";
    case Attachment::Kind::Table: return "table";
    case Attachment::Kind::Link: return "link";
  }
  return "?";
}

void validate(const Utterance& u) {
  if (util::trim(u.text).empty()) throw Error(ErrorCode::InvalidUtterance, "utterance text is blank");
}

const ContextEntry* TurnContext::find(const std::string& key) const {
  auto it = entries.find(key);
  return it == entries.end() ? nullptr : &it->second;
}

void purge_expired(TurnContext& ctx) {
  std::erase_if(ctx.entries, [](const auto& kv) { return kv.second.ttl_turns && *kv.second.ttl_turns <= 0; });
}

TurnContext tick_context(TurnContext ctx) {
  purge_expired(ctx);
  for (auto& [key, entry] : ctx.entries) {
    if (entry.ttl_turns && entry.written_at_turn != ctx.turn) --*entry.ttl_turns;
  }
  return ctx;
}

AgentResponse make_decline(const TurnContext& ctx, Mode mode, std::string diagnostic) {
  AgentResponse r;
  r.declined = true;
  r.confidence = 0;
  r.mode = mode;
  r.updated_context = ctx;
  r.diagnostic = std::move(diagnostic);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Serialization, std::string("malformed ") + what + ": " + e.what());
  }
}

}  // namespace

json to_json(const Utterance& u) {
  return {{"text", u.text}, {"user_id", u.user_id}, {"persona", to_string(u.persona)}, {"turn_id", u.turn_id}};
}

Utterance utterance_from_json(const json& j) {
  return guarded("utterance", [&] {
    Utterance u;
    u.text = j.at("text").get<std::string>();
    u.user_id = j.value("user_id", "");
    u.persona = persona_from_string(j.at("persona").get<std::string>());
    u.turn_id = j.value("turn_id", std::int64_t{0});
    return u;
  });
}

json to_json(const TurnContext& c) {
  json entries = json::object();
  for (const auto& [key, e] : c.entries) {
    entries[key] = {{"value", e.value},
                    {"ttl", e.ttl_turns ? json(*e.ttl_turns) : json(nullptr)},
                    {"written_by", e.written_by},
                    {"written_at_turn", e.written_at_turn}};
  }
  return {{"session_id", c.session_id}, {"turn", c.turn}, {"entries", entries}};
}

TurnContext context_from_json(const json& j) {
  return guarded("context", [&] {
    TurnContext c;
    c.session_id = j.value("session_id", "");
    c.turn = j.value("turn", std::int64_t{0});
    const json entries = j.value("entries", json::object());
    for (const auto& [key, e] : entries.items()) {
      ContextEntry entry;
      entry.value = e.at("value");
      if (const auto& ttl = e.at("ttl"); !ttl.is_null()) {
        entry.ttl_turns = ttl.get<int>();
        if (*entry.ttl_turns < 0) throw Error(ErrorCode::Serialization, "negative ttl for '" + key + "'");
      }
      entry.written_by = e.value("written_by", "");
      entry.written_at_turn = e.value("written_at_turn", std::int64_t{0});
      c.entries.emplace(key, std::move(entry));
    }
    return c;
  });
}

json to_json(const Attachment& a) {
  json j = {{"kind", to_string(a.kind)}, {"caption", a.caption}};
  switch (a.kind) {
    case Attachment::Kind::Image:
      j["data"] = util::base64_encode(a.data);
      j["mime"] = a.mime;
      break;
    case Attachment::Kind::Link: j["data"] = a.data; break;
    case Attachment::Kind::Table: j["table"] = {{"columns", a.table.columns}, {"rows", a.table.rows}}; break;
  }
  return j;
}

Attachment attachment_from_json(const json& j) {
  return guarded("attachment", [&] {
    Attachment a;
    const auto kind = j.at("kind").get<std::string>();
    a.caption = j.value("caption", "");
    if (kind == "image") {
      a.kind = Attachment::Kind::Image;
      a.data = util::base64_decode(j.at("data").get<std::string>());
      a.mime = j.value("mime", "");
    } else if (kind == "link") {
      a.kind = Attachment::Kind::Link;
      a.data = j.at("data").get<std::string>();
    } else if (kind == "table") {
      a.kind = Attachment::Kind::Table;
      a.table.columns = j.at("table").at("columns").get<std::vector<std::string>>();
      a.table.rows = j.at("table").at("rows").get<std::vector<std::vector<std::string>>>();
    } else {
      throw Error(ErrorCode::Serialization, "unknown attachment kind '" + kind + "'");
    }
    return a;
  });
}

json to_json(const AgentResponse& r) {
  return {{"text", r.text ? json(*r.text) : json(nullptr)},
          {"attachment", r.attachment ? to_json(*r.attachment) : json(nullptr)},
          {"confidence", r.confidence},
          {"context", to_json(r.updated_context)},
          {"declined", r.declined},
          {"mode", to_string(r.mode)},
          {"dialog_depth", r.dialog_depth},
          {"intent", r.intent},
          {"timed_out", r.timed_out},
          {"diagnostic", r.diagnostic}};
}

AgentResponse response_from_json(const json& j) {
  return guarded("response", [&] {
    AgentResponse r;
    if (auto t = j.value("text", json(nullptr)); !t.is_null()) r.text = t.get<std::string>();
    if (auto a = j.value("attachment", json(nullptr)); !a.is_null()) r.attachment = attachment_from_json(a);
    r.confidence = j.at("confidence").get<double>();
    r.updated_context = context_from_json(j.at("context"));
    r.declined = j.at("declined").get<bool>();
    r.mode = mode_from_string(j.at("mode").get<std::string>());
    r.dialog_depth = j.value("dialog_depth", 0);
    r.intent = j.value("intent", "");
    r.timed_out = j.value("timed_out", false);
    r.diagnostic = j.value("diagnostic", "");
    if (r.confidence < 0 || r.confidence > 1) throw Error(ErrorCode::Serialization, "confidence outside [0, 1]");
    return r;
  });
}

json to_json(const AgentManifest& m) {
  json personas = json::array();
  for (Persona p : m.allowed_personas) personas.push_back(to_string(p));
  json intents = json::object();
  for (const auto& [intent, set] : m.intent_personas) {
    json list = json::array();
    for (Persona p : set) list.push_back(to_string(p));
    intents[intent] = list;
  }
  return {{"name", m.name},
          {"description", m.description},
          {"allowed_personas", personas},
          {"world_changing", m.world_changing},
          {"endpoint", m.endpoint},
          {"intent_personas", intents}};
}

AgentManifest manifest_from_json(const json& j) {
  return guarded("manifest", [&] {
    AgentManifest m;
    m.name = j.at("name").get<std::string>();
    m.description = j.value("description", "");
    for (const auto& p : j.at("allowed_personas")) m.allowed_personas.insert(persona_from_string(p.get<std::string>()));
    m.world_changing = j.value("world_changing", false);
    m.endpoint = j.value("endpoint", "local");
    const json intents = j.value("intent_personas", json::object());
    for (const auto& [intent, list] : intents.items()) {
      auto& set = m.intent_personas[intent];
      for (const auto& p : list) set.insert(persona_from_string(p.get<std::string>()));
    }
    if (m.name.empty()) throw Error(ErrorCode::Serialization, "manifest without a name");
    return m;
  });
}

// ---------------------------------------------------------------------------
// Ledger

void SideEffectLedger::record(Entry e) {
  std::lock_guard lock(mu_);
  entries_.push_back(std::move(e));
}

std::vector<SideEffectLedger::Entry> SideEffectLedger::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t SideEffectLedger::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void SideEffectLedger::clear() {
  std::lock_guard lock(mu_);
  entries_.clear();
}

// ---------------------------------------------------------------------------
// Frames and pipelines

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

SkillFrame::SkillFrame(const Utterance& u, const TurnContext& ctx, Mode m, std::string agent)
    : utterance(u), mode(m), ctx_in(ctx), ctx_out(ctx), agent_(std::move(agent)) {}

void SkillFrame::set(const std::string& slot, json value) {
  if (!running_ || !contains(running_->outputs, slot)) {
    throw Error(ErrorCode::SkillFailure, "skill '" + (running_ ? running_->name : std::string("?")) +
                                             "' wrote undeclared slot '" + slot + "'");
  }
  slots_[slot] = std::move(value);
}

bool SkillFrame::has(const std::string& slot) const { return slots_.count(slot) > 0; }

const json& SkillFrame::get(const std::string& slot) const {
  static const json null;
  if (running_ && !contains(running_->inputs, slot) && !contains(running_->outputs, slot)) {
    throw Error(ErrorCode::SkillFailure, "skill '" + running_->name + "' read undeclared slot '" + slot + "'");
  }
  auto it = slots_.find(slot);
  return it == slots_.end() ? null : it->second;
}

void SkillFrame::put_context(const std::string& key, json value, std::optional<int> ttl) {
  ctx_out.entries[key] = ContextEntry{std::move(value), ttl, agent_, ctx_in.turn};
}

void SkillFrame::erase_context(const std::string& key) { ctx_out.entries.erase(key); }

void AgentPipeline::invoke(const Skill& skill, const SkillFn& fn, SkillFrame& frame) const {
  frame.running_ = &skill.spec;
  fn(frame);
  frame.running_ = nullptr;
}

AgentResponse AgentPipeline::run(const Utterance& u, const TurnContext& ctx, Mode mode) {
  if (!manifest_.allowed_personas.count(u.persona)) {
    return make_decline(ctx, mode, std::string(to_string(u.persona)) + " is not served");
  }
  SkillFrame frame(u, ctx, mode, manifest_.name);
  try {
    invoke(understand_, understand_.run, frame);
    if (frame.declined || frame.intent.empty() || frame.confidence <= 0) return make_decline(ctx, mode);
    if (auto it = manifest_.intent_personas.find(frame.intent);
        it != manifest_.intent_personas.end() && !it->second.count(u.persona)) {
      return make_decline(ctx, mode, std::string(to_string(u.persona)) + " may not " + frame.intent);
    }
    for (const auto& step : wiring_) {
      if (frame.declined || frame.halted) break;
      if (!step.intents.empty() && !contains(step.intents, frame.intent)) continue;
      const Skill& act = *std::find_if(acts_.begin(), acts_.end(), [&](const Skill& s) { return s.spec.name == step.act; });
      if (act.spec.world_changing && mode == Mode::Preview) {
        if (act.dry_run) invoke(act, act.dry_run, frame);
        continue;
      }
      if (act.spec.world_changing && ledger_) {
        ledger_->record({manifest_.name, act.spec.name, ctx.session_id, u.turn_id, mode});
      }
      invoke(act, act.run, frame);
    }
    if (frame.declined) return make_decline(ctx, mode);
    invoke(respond_, respond_.run, frame);
  } catch (const std::exception& e) {
    return make_decline(ctx, mode, std::string("SkillFailure: ") + e.what());
  }
  if (frame.declined || (!frame.text && !frame.attachment)) return make_decline(ctx, mode);

  AgentResponse r;
  r.text = std::move(frame.text);
  r.attachment = std::move(frame.attachment);
  r.confidence = std::clamp(frame.confidence, 0.0, 1.0);
  r.mode = mode;
  r.dialog_depth = frame.dialog_depth;
  r.intent = frame.intent;
  r.updated_context = mode == Mode::Execute ? std::move(frame.ctx_out) : ctx;
  return r;
}

std::shared_ptr<AgentPipeline> compose_agent(AgentManifest manifest, Skill understand, std::vector<Skill> acts,
                                             Skill respond, Wiring wiring, std::shared_ptr<SideEffectLedger> ledger) {
  auto role_error = [&](const Skill& s, std::string_view where) {
    return Error(ErrorCode::RoleError, manifest.name + ": skill '" + s.spec.name + "' has role " +
                                           std::string(to_string(s.spec.role)) + " but sits in the " +
                                           std::string(where) + " position");
  };
  if (understand.spec.role != SkillRole::Understand) throw role_error(understand, "understand");
  if (respond.spec.role != SkillRole::Respond) throw role_error(respond, "respond");
  for (const auto& a : acts) {
    if (a.spec.role != SkillRole::Act) throw role_error(a, "act");
  }
  for (const Skill* s : {&understand, &respond}) {
    if (s->spec.world_changing) {
      throw Error(ErrorCode::RoleError, manifest.name + ": " + std::string(to_string(s->spec.role)) + " skill '" +
                                            s->spec.name + "' cannot be world-changing");
    }
  }
  if (!understand.run || !respond.run) throw Error(ErrorCode::WiringError, manifest.name + ": skill without a body");

  auto wiring_error = [&](const std::string& msg) { return Error(ErrorCode::WiringError, manifest.name + ": " + msg); };
  std::vector<std::string> available = understand.spec.outputs;
  if (!understand.spec.inputs.empty()) {
    throw wiring_error("understand skill reads slot '" + understand.spec.inputs.front() + "' nothing writes");
  }
  std::set<std::string> scheduled;
  for (const auto& step : wiring) {
    auto it = std::find_if(acts.begin(), acts.end(), [&](const Skill& s) { return s.spec.name == step.act; });
    if (it == acts.end()) throw wiring_error("wiring names unknown act '" + step.act + "'");
    if (!it->run) throw wiring_error("act '" + step.act + "' has no body");
    for (const auto& in : it->spec.inputs) {
      if (!contains(available, in)) throw wiring_error("act '" + step.act + "' reads undeclared slot '" + in + "'");
    }
    for (const auto& out : it->spec.outputs) available.push_back(out);
    scheduled.insert(step.act);
  }
  for (const auto& a : acts) {
    if (!scheduled.count(a.spec.name)) throw wiring_error("act '" + a.spec.name + "' is never scheduled");
  }
  for (const auto& in : respond.spec.inputs) {
    if (!contains(available, in)) throw wiring_error("respond reads undeclared slot '" + in + "'");
  }

  std::shared_ptr<AgentPipeline> p(new AgentPipeline);
  manifest.world_changing =
      std::any_of(acts.begin(), acts.end(), [](const Skill& s) { return s.spec.world_changing; });
  p->manifest_ = std::move(manifest);
  p->understand_ = std::move(understand);
  p->acts_ = std::move(acts);
  p->respond_ = std::move(respond);
  p->wiring_ = std::move(wiring);
  p->ledger_ = std::move(ledger);
  return p;
}

}  // namespace bpa

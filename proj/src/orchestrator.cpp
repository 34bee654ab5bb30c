#include "bpa/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <thread>

#include <boost/program_options.hpp>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa {

namespace po = boost::program_options;

// ---------------------------------------------------------------------------
// Config

OrchestratorConfig parse_config(std::istream& in) {
  po::options_description desc;
  desc.add_options()("assistant", po::value<std::string>())("scorer", po::value<std::string>())(
      "selector", po::value<std::string>())("k", po::value<int>())("threshold", po::value<double>())(
      "epsilon_start", po::value<double>())("epsilon_decay", po::value<double>())(
      "epsilon_floor", po::value<double>())("alpha", po::value<double>())("sequencer", po::value<std::string>())(
      "priority", po::value<std::string>())("preview_deadline_ms", po::value<int>())(
      "execute_deadline_ms", po::value<int>())("seed", po::value<std::uint64_t>())(
      "fallback_text", po::value<std::string>());

  po::variables_map vm;
  try {
    po::store(po::parse_config_file(in, desc, false), vm);
    po::notify(vm);
  } catch (const po::error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }

  OrchestratorConfig c;
  auto bad = [](const std::string& key, const std::string& value) {
    return Error(ErrorCode::InvalidConfig, "invalid value '" + value + "' for " + key);
  };
  if (vm.count("assistant")) c.assistant = util::to_lower(vm["assistant"].as<std::string>());
  if (vm.count("scorer")) {
    auto v = util::to_lower(vm["scorer"].as<std::string>());
    if (v == "identity") c.scorer = ScorerKind::Identity;
    else if (v == "minmax") c.scorer = ScorerKind::MinMax;
    else throw bad("scorer", v);
  }
  if (vm.count("selector")) {
    auto v = util::to_lower(vm["selector"].as<std::string>());
    if (v == "top1" || v == "topone") c.selector.kind = SelectorKind::TopOne;
    else if (v == "topk") c.selector.kind = SelectorKind::TopK;
    else if (v == "epsilon_greedy" || v == "epsilongreedy") c.selector.kind = SelectorKind::EpsilonGreedy;
    else throw bad("selector", v);
  }
  if (vm.count("sequencer")) {
    auto v = util::to_lower(vm["sequencer"].as<std::string>());
    if (v == "descending_score" || v == "descendingscore") c.sequencer = SequencerKind::DescendingScore;
    else if (v == "rule_priority" || v == "rulepriority") c.sequencer = SequencerKind::RulePriority;
    else throw bad("sequencer", v);
  }
  if (vm.count("k")) c.selector.k = vm["k"].as<int>();
  if (vm.count("threshold")) c.selector.threshold = vm["threshold"].as<double>();
  if (vm.count("epsilon_start")) c.selector.epsilon_start = vm["epsilon_start"].as<double>();
  if (vm.count("epsilon_decay")) c.selector.epsilon_decay = vm["epsilon_decay"].as<double>();
  if (vm.count("epsilon_floor")) c.selector.epsilon_floor = vm["epsilon_floor"].as<double>();
  if (vm.count("alpha")) c.selector.alpha = vm["alpha"].as<double>();
  if (vm.count("priority")) {
    c.priority.clear();
    for (const auto& p : util::split(vm["priority"].as<std::string>(), ',')) {
      if (auto t = util::trim(p); !t.empty()) c.priority.push_back(t);
    }
  }
  if (vm.count("preview_deadline_ms")) c.preview_deadline = std::chrono::milliseconds(vm["preview_deadline_ms"].as<int>());
  if (vm.count("execute_deadline_ms")) c.execute_deadline = std::chrono::milliseconds(vm["execute_deadline_ms"].as<int>());
  if (vm.count("seed")) c.seed = vm["seed"].as<std::uint64_t>();
  if (vm.count("fallback_text")) c.fallback_text = vm["fallback_text"].as<std::string>();

  const auto& s = c.selector;
  if (s.k < 1) throw bad("k", std::to_string(s.k));
  auto unit = [&](const char* key, double v) {
    if (!(v >= 0 && v <= 1)) throw bad(key, util::format_real(v));
  };
  unit("threshold", s.threshold);
  unit("epsilon_start", s.epsilon_start);
  unit("epsilon_decay", s.epsilon_decay);
  unit("epsilon_floor", s.epsilon_floor);
  unit("alpha", s.alpha);
  if (c.preview_deadline.count() <= 0) throw bad("preview_deadline_ms", std::to_string(c.preview_deadline.count()));
  if (c.execute_deadline.count() <= 0) throw bad("execute_deadline_ms", std::to_string(c.execute_deadline.count()));
  return c;
}

OrchestratorConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read config file " + file.string());
  try {
    return parse_config(in);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, file.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Stages

namespace {

std::vector<AgentResponse> run_all(const Utterance& u, const TurnContext& ctx,
                                   const std::vector<std::shared_ptr<Agent>>& agents, Mode mode,
                                   std::chrono::milliseconds deadline) {
  std::vector<std::future<AgentResponse>> futures;
  futures.reserve(agents.size());
  for (const auto& agent : agents) {
    std::promise<AgentResponse> promise;
    futures.push_back(promise.get_future());
    std::thread([agent, u, ctx, mode, p = std::move(promise)]() mutable {
      try {
        p.set_value(agent->run(u, ctx, mode));
      } catch (const std::exception& e) {
        p.set_value(make_decline(ctx, mode, std::string("agent failed: ") + e.what()));
      }
    }).detach();
  }
  const auto until = std::chrono::steady_clock::now() + deadline;
  std::vector<AgentResponse> out;
  out.reserve(agents.size());
  for (std::size_t i = 0; i < futures.size(); ++i) {
    if (futures[i].wait_until(until) == std::future_status::ready) {
      out.push_back(futures[i].get());
    } else {
      auto r = make_decline(ctx, mode, "deadline exceeded");
      r.timed_out = true;
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace

std::vector<ScoredPreview> fan_out_preview(const Utterance& u, const TurnContext& ctx,
                                           const std::vector<std::shared_ptr<Agent>>& agents,
                                           std::chrono::milliseconds deadline) {
  if (agents.empty()) throw Error(ErrorCode::EmptyRegistry, "no agents registered");
  auto responses = run_all(u, ctx, agents, Mode::Preview, deadline);
  std::vector<ScoredPreview> out;
  out.reserve(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    auto& r = responses[i];
    if (r.declined) r.confidence = 0;
    ScoredPreview p;
    p.agent_name = agents[i]->manifest().name;
    p.raw_confidence = std::clamp(r.confidence, 0.0, 1.0);
    p.dialog_depth = r.dialog_depth;
    p.preview = std::move(r);
    out.push_back(std::move(p));
  }
  return out;
}

void score(std::vector<ScoredPreview>& previews, ScorerKind scorer) {
  if (scorer == ScorerKind::Identity) {
    for (auto& p : previews) p.final_score = p.preview.declined ? 0 : p.raw_confidence;
    return;
  }
  double lo = 1, hi = 0;
  bool any = false;
  for (const auto& p : previews) {
    if (p.preview.declined) continue;
    lo = std::min(lo, p.raw_confidence);
    hi = std::max(hi, p.raw_confidence);
    any = true;
  }
  for (auto& p : previews) {
    if (p.preview.declined || !any) p.final_score = 0;
    else if (hi == lo) p.final_score = 1.0;
    else p.final_score = (p.raw_confidence - lo) / (hi - lo);
  }
}

namespace {

std::vector<std::size_t> eligible(const std::vector<ScoredPreview>& previews, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < previews.size(); ++i) {
    if (!previews[i].preview.declined && previews[i].final_score >= threshold) out.push_back(i);
  }
  if (out.empty()) throw Error(ErrorCode::NoEligibleAgent, "no agent scored above the threshold");
  return out;
}

}  // namespace

std::vector<std::string> select_top(const std::vector<ScoredPreview>& previews, const SelectorPolicy& policy) {
  auto idx = eligible(previews, policy.threshold);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return previews[a].final_score > previews[b].final_score; });
  const std::size_t k = policy.kind == SelectorKind::TopK ? static_cast<std::size_t>(policy.k) : 1;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < idx.size() && i < k; ++i) out.push_back(previews[idx[i]].agent_name);
  return out;
}

std::vector<ExecutedResponse> sequence(std::vector<ExecutedResponse> executed, SequencerKind kind,
                                       const std::vector<std::string>& priority) {
  if (executed.size() <= 1) return executed;
  auto rank = [&](const ExecutedResponse& r) {
    if (kind != SequencerKind::RulePriority) return priority.size();
    auto it = std::find(priority.begin(), priority.end(), r.agent);
    return static_cast<std::size_t>(it - priority.begin());
  };
  std::stable_sort(executed.begin(), executed.end(), [&](const ExecutedResponse& a, const ExecutedResponse& b) {
    auto ra = rank(a), rb = rank(b);
    if (ra != rb) return ra < rb;
    return a.final_score > b.final_score;
  });
  return executed;
}

std::size_t feature_bucket(const std::vector<ScoredPreview>& previews, const std::string& text) {
  const ScoredPreview* best = nullptr;
  for (const auto& p : previews) {
    if (p.preview.declined || p.preview.intent.empty()) continue;
    if (!best || p.raw_confidence > best->raw_confidence) best = &p;
  }
  std::string feature;
  if (best) {
    feature = best->preview.intent;
  } else {
    auto words = util::split(util::trim(util::to_lower(text)), ' ');
    feature = words.empty() ? std::string() : words.front();
  }
  return static_cast<std::size_t>(util::fnv1a64(feature) % kFeatureBuckets);
}

// ---------------------------------------------------------------------------
// Bandit

BanditSelector::BanditSelector(SelectorPolicy policy, std::uint64_t seed) : policy_(policy), rng_(seed) {}

double BanditSelector::epsilon() const {
  std::lock_guard lock(mu_);
  return std::max(policy_.epsilon_floor,
                  policy_.epsilon_start * std::pow(policy_.epsilon_decay, static_cast<double>(learned_)));
}

BanditSelector::Decision BanditSelector::select(const std::vector<ScoredPreview>& previews, std::size_t bucket) {
  auto idx = eligible(previews, policy_.threshold);
  const double eps = epsilon();
  std::lock_guard lock(mu_);
  for (auto i : idx) values_.try_emplace({bucket, previews[i].agent_name}, previews[i].final_score);

  std::size_t chosen = idx.front();
  if (std::uniform_real_distribution<double>(0, 1)(rng_) < eps) {
    chosen = idx[std::uniform_int_distribution<std::size_t>(0, idx.size() - 1)(rng_)];
  } else {
    double best = -1;
    for (auto i : idx) {
      double v = values_[{bucket, previews[i].agent_name}];
      if (v > best) {
        best = v;
        chosen = i;
      }
    }
  }
  if (pending_.size() >= 4096) pending_.erase(pending_.begin());
  Decision d{next_id_++, previews[chosen].agent_name};
  pending_[d.id] = {bucket, d.agent};
  return d;
}

double BanditSelector::learn(const FeedbackSignal& f) {
  std::lock_guard lock(mu_);
  auto it = pending_.find(f.decision_id);
  if (it == pending_.end()) {
    throw Error(ErrorCode::UnknownTurn, "no pending selection " + std::to_string(f.decision_id));
  }
  if (!f.selected_agent.empty() && f.selected_agent != it->second.agent) {
    throw Error(ErrorCode::UnknownTurn, "selection " + std::to_string(f.decision_id) + " did not pick " +
                                            f.selected_agent);
  }
  double& v = values_[{it->second.bucket, it->second.agent}];
  v += policy_.alpha * (f.reward - v);
  pending_.erase(it);
  ++learned_;
  return v;
}

std::optional<double> BanditSelector::value(std::size_t bucket, const std::string& agent) const {
  std::lock_guard lock(mu_);
  auto it = values_.find({bucket, agent});
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t BanditSelector::learned() const {
  std::lock_guard lock(mu_);
  return learned_;
}

// ---------------------------------------------------------------------------
// Orchestrator

Orchestrator::Orchestrator(OrchestratorConfig config)
    : config_(std::move(config)), bandit_(config_.selector, config_.seed) {}

void Orchestrator::register_agent(std::shared_ptr<Agent> agent) {
  std::unique_lock lock(registry_mu_);
  const auto& name = agent->manifest().name;
  for (const auto& a : registry_) {
    if (a->manifest().name == name) throw Error(ErrorCode::DuplicateName, "agent '" + name + "' already registered");
  }
  registry_.push_back(std::move(agent));
}

bool Orchestrator::unregister_agent(const std::string& name) {
  std::unique_lock lock(registry_mu_);
  return std::erase_if(registry_, [&](const auto& a) { return a->manifest().name == name; }) > 0;
}

std::vector<std::shared_ptr<Agent>> Orchestrator::agents() const {
  std::shared_lock lock(registry_mu_);
  std::vector<std::shared_ptr<Agent>> out;
  for (const auto& a : registry_) {
    if (a->available()) out.push_back(a);
  }
  return out;
}

TurnResult Orchestrator::run_turn(const Utterance& u, TurnContext ctx) {
  validate(u);
  ctx.turn = u.turn_id;
  purge_expired(ctx);
  const auto agents = this->agents();

  TurnResult result;
  auto& trace = result.trace;
  trace.previews = fan_out_preview(u, ctx, agents, config_.preview_deadline);
  score(trace.previews, config_.scorer);

  auto fallback = [&] {
    trace.fallback = true;
    ExecutedResponse r{"fallback", 0, {}};
    r.response.text = config_.fallback_text;
    r.response.mode = Mode::Execute;
    r.response.updated_context = ctx;
    result.responses = {std::move(r)};
    result.context = tick_context(ctx);
    return result;
  };

  try {
    if (config_.selector.kind == SelectorKind::EpsilonGreedy) {
      auto d = bandit_.select(trace.previews, feature_bucket(trace.previews, u.text));
      trace.selected = {d.agent};
      trace.decision_id = d.id;
    } else {
      trace.selected = select_top(trace.previews, config_.selector);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoEligibleAgent) throw;
    return fallback();
  }

  // Execute in registration order so sequencing ties stay deterministic.
  std::vector<std::shared_ptr<Agent>> chosen;
  std::vector<double> scores;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto& name = trace.previews[i].agent_name;
    if (std::find(trace.selected.begin(), trace.selected.end(), name) != trace.selected.end()) {
      chosen.push_back(agents[i]);
      scores.push_back(trace.previews[i].final_score);
    }
  }
  auto executed = run_all(u, ctx, chosen, Mode::Execute, config_.execute_deadline);
  std::vector<ExecutedResponse> responses;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const auto& name = chosen[i]->manifest().name;
    trace.executed.push_back(name);
    if (executed[i].declined) {
      trace.diagnostics.push_back(name + " declined in execute mode" +
                                  (executed[i].diagnostic.empty() ? "" : ": " + executed[i].diagnostic));
      continue;
    }
    responses.push_back({name, scores[i], std::move(executed[i])});
  }
  if (responses.empty()) return fallback();

  result.responses = sequence(std::move(responses), config_.sequencer, config_.priority);

  // Last writer wins per key, in sequenced order.
  TurnContext merged = ctx;
  std::map<std::string, std::string> writer;
  for (const auto& r : result.responses) {
    const auto& out = r.response.updated_context.entries;
    for (const auto& [key, entry] : out) {
      auto before = ctx.entries.find(key);
      if (before != ctx.entries.end() && before->second == entry) continue;
      if (auto w = writer.find(key); w != writer.end()) {
        trace.diagnostics.push_back("context key '" + key + "' written by " + w->second + " and " + r.agent);
      }
      merged.entries[key] = entry;
      writer[key] = r.agent;
    }
    for (const auto& [key, entry] : ctx.entries) {
      if (!out.count(key)) {
        merged.entries.erase(key);
        writer[key] = r.agent;
      }
    }
  }
  merged.turn = u.turn_id;
  result.context = tick_context(std::move(merged));
  return result;
}

}  // namespace bpa

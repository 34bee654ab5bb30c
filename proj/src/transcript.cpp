#include "bpa/transcript.hpp"

#include <fstream>
#include <regex>
#include <sstream>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa {

namespace {

std::optional<Attachment::Kind> kind_from_string(const std::string& s) {
  if (s == "image") return Attachment::Kind::Image;
  if (s == "table") return Attachment::Kind::Table;
  if (s == "link") return Attachment::Kind::Link;
  return std::nullopt;
}

}  // namespace

Transcript parse_transcript(std::istream& in, const std::string& name) {
  Transcript t;
  t.name = name;
  Persona persona = Persona::Employee;
  std::string user = "user";
  TranscriptTurn* open = nullptr;
  bool expectation_seen = false;
  int line_no = 0;

  auto fail = [&](const std::string& problem) {
    throw Error(ErrorCode::MalformedTranscript, name + ":" + std::to_string(line_no) + ": " + problem);
  };
  auto close = [&] {
    if (open && !expectation_seen) {
      line_no = open->line;
      fail("turn has no expected reply (= or ~)");
    }
    open = nullptr;
  };

  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const auto line = util::trim(raw);
    if (line.empty() || line[0] == '#') continue;

    const char tag = line[0];
    if (tag == '>' || tag == '@' || tag == '=' || tag == '~' || tag == '+') {
      if (line.size() < 2 || line[1] != ' ') fail(std::string("expected a space after '") + tag + "'");
      const std::string body = line.substr(2);
      switch (tag) {
        case '>':
          close();
          if (util::trim(body).empty()) fail("empty utterance");
          t.turns.push_back({line_no, persona, user, body, std::nullopt, "", false, std::nullopt});
          open = &t.turns.back();
          expectation_seen = false;
          break;
        case '@':
          if (!open) fail("agent line outside a turn");
          if (open->agent) fail("second agent line in one turn");
          open->agent = util::trim(body);
          break;
        case '=':
        case '~':
          if (!open) fail("reply line outside a turn");
          if (expectation_seen) fail("second reply line in one turn");
          open->expected = body;
          open->regex = tag == '~';
          if (open->regex) {
            try {
              std::regex check(body);
            } catch (const std::regex_error& e) {
              fail(std::string("bad regular expression: ") + e.what());
            }
          }
          expectation_seen = true;
          break;
        case '+': {
          if (!open) fail("attachment line outside a turn");
          auto k = kind_from_string(util::trim(body));
          if (!k) fail("attachment must be image, table or link");
          open->attachment = k;
          break;
        }
      }
      continue;
    }

    const auto colon = line.find(':');
    if (colon == std::string::npos) fail("unrecognized line '" + line + "'");
    const auto key = util::trim(line.substr(0, colon));
    const auto value = util::trim(line.substr(colon + 1));
    close();
    if (key == "assistant") {
      if (!t.turns.empty()) fail("assistant must be declared before the first turn");
      t.assistant = value;
    } else if (key == "persona") {
      try {
        persona = persona_from_string(value);
      } catch (const Error&) {
        fail("unknown persona '" + value + "'");
      }
    } else if (key == "user") {
      if (value.empty()) fail("empty user");
      user = value;
    } else {
      fail("unknown header '" + key + "'");
    }
  }
  close();
  if (t.turns.empty()) {
    line_no = 0;
    fail("no turns");
  }
  return t;
}

Transcript load_transcript(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::MalformedTranscript, "cannot read transcript " + file.string());
  return parse_transcript(in, file.filename().string());
}

bool ReplayReport::passed() const { return failures() == 0; }

std::size_t ReplayReport::failures() const {
  std::size_t n = 0;
  for (const auto& t : turns) n += !t.passed();
  return n;
}

std::string ReplayReport::render() const {
  std::ostringstream out;
  out << "transcript " << transcript << "\n";
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const auto& t = turns[i];
    out << "turn " << i + 1 << " (line " << t.line << ") " << (t.passed() ? "PASS" : "FAIL") << " [" << t.agent
        << "] " << t.text;
    if (t.attachment) out << " <" << to_string(*t.attachment) << ">";
    out << "\n";
    for (const auto& d : t.divergences) out << "  " << d << "\n";
  }
  out << (passed() ? "PASS" : "FAIL") << " " << turns.size() - failures() << "/" << turns.size() << " turns\n";
  return out.str();
}

ReplayReport replay(const Transcript& t, const TurnRunner& run, const std::string& session_id) {
  ReplayReport report;
  report.transcript = t.name;
  TurnContext ctx{session_id, 0, {}};
  std::int64_t turn_id = 0;
  for (const auto& turn : t.turns) {
    TurnOutcome o;
    o.line = turn.line;
    o.utterance = turn.utterance;
    auto result = run(Utterance{turn.utterance, turn.user, turn.persona, ++turn_id}, ctx);
    ctx = result.context;
    if (result.responses.empty()) {
      o.divergences.push_back("no response");
      report.turns.push_back(std::move(o));
      continue;
    }
    const auto& first = result.responses.front();
    o.agent = first.agent;
    o.text = first.response.text.value_or("");
    if (first.response.attachment) o.attachment = first.response.attachment->kind;

    if (turn.agent && *turn.agent != o.agent) {
      o.divergences.push_back("expected agent " + *turn.agent + ", got " + o.agent);
    }
    const bool text_ok = turn.regex ? std::regex_match(o.text, std::regex(turn.expected)) : o.text == turn.expected;
    if (!text_ok) {
      o.divergences.push_back(std::string("expected ") + (turn.regex ? "match for /" : "\"") + turn.expected +
                              (turn.regex ? "/" : "\""));
    }
    if (turn.attachment && o.attachment != turn.attachment) {
      o.divergences.push_back(std::string("expected ") + std::string(to_string(*turn.attachment)) +
                              " attachment, got " +
                              (o.attachment ? std::string(to_string(*o.attachment)) : std::string("none")));
    }
    report.turns.push_back(std::move(o));
  }
  return report;
}

ReplayReport replay_fresh(const Transcript& t, AssistantOptions options) {
  if (!t.assistant.empty()) options.config.assistant = t.assistant;
  options.run_daemon = false;
  Assistant bot(std::move(options));
  return replay(t, [&](const Utterance& u, TurnContext ctx) { return bot.turn(u, std::move(ctx)); });
}

}  // namespace bpa

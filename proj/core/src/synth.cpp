#include "dialogscore/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "dialogscore/prng.hpp"

namespace dialogscore {

namespace {

// Template banks. Everything outside the politeness banks is deliberately
// free of the lexical patterns the politeness detectors match, so the
// planted strategy count is exactly what a dialog's flags reflect.

const std::vector<std::string> kTopicalTokens = {
    "meeting", "slides", "presentation", "review", "schedule",
    "agenda",  "project", "deadline",    "feedback"};

const std::vector<std::string> kOffTopicTokens = {
    "weather", "lunch", "football", "vacation", "cafeteria", "traffic", "movie", "garden"};

const std::vector<std::string> kTaskStrong = {
    "i need to schedule a meeting about the slides",
    "let us find a time to review the presentation",
    "i plan to finish the deck before the meeting",
    "my goal is to set a review session this week",
};

const std::vector<std::string> kTaskWeak = {
    "i am not certain what i need yet",
    "some other time might work",
    "i have not prepared anything so far",
};

const std::vector<std::string> kDiscourseMarkers = {
    "first", "then", "next", "finally", "because", "so", "also", "moreover"};

const std::vector<std::string> kEngagementPhrases = {
    "that is a really interesting point",
    "i see what you mean",
    "good point about the timing",
    "let me check my calendar for options",
};

const std::vector<std::string> kAckTokens = {"yes", "sure", "okay", "right", "indeed"};

const std::vector<std::string> kRepairPhrases = {
    "i meant the slides for friday",
    "let me rephrase that",
    "to clarify i am asking about the review",
    "what i said was about the schedule",
};

const std::vector<std::string> kFillerTokens = {"um", "well", "anyway", "actually"};

// Strategy lexemes in positions or windows the politeness detectors
// correctly ignore. Planted independently of the appropriateness level,
// they decouple the raw n-grams from the label while the binary strategy
// flags stay exact.
struct Distractor {
  const char* text;
  // 0 = anywhere, 1 = never in the last two user turns (appreciation
  // lexemes), 2 = never in the first user turn (greeting lexemes)
  int placement;
};

const std::vector<Distractor> kPolitenessDistractors = {
    {"the weather was perfect yesterday", 1},
    {"the garden looks wonderful lately", 1},
    {"the view from the office is perfect", 1},
    {"the old plan sounds good on paper but needs work", 1},
    {"i said hello to the team downstairs", 2},
    {"we say hi at the door every day", 2},
    {"the deadline could move to friday", 0},
    {"the room will be free after three", 0},
    {"a shorter deck would work better", 0},
    {"the plan can stay on track i hope", 0},
    {"no more wondering about the slot now", 0},
    // modal and "you" in one turn but outside the detector window
    {"could the deadline move before you all return", 0},
    {"will the room be ready when you arrive", 0},
    {"can the deck be trimmed before you present", 0},
    {"would the plan still work once you move it", 0},
};

// One bank per politeness strategy, several lexical realizations each so
// the binary strategy indicators generalize where raw n-grams fragment.
const std::array<std::vector<std::string>, 9> kPolitenessBanks = {{
    // counterfactual (gap variants keep the modal within the detector
    // window without a fixed modal-you bigram)
    {"could you take a look at the slides", "would you share your feedback on the deck",
     "could one of you take a look at the deck", "would either of you check the agenda"},
    // indicative
    {"can you meet on friday afternoon", "will you join the review session",
     "can one of you share the notes", "will either of you join the call"},
    // deferential
    {"i was wondering if there is a free slot", "we were wondering about a good time",
     "i was wondering if the deck is ready for a look"},
    // gratitude
    {"thank you so much for your time", "thanks a lot for the help",
     "i am grateful for your support", "i appreciate it very much",
     "thank you for making room in the calendar", "many thanks for the quick reply"},
    // apology
    {"sorry to bother you with this", "i apologize for the short notice",
     "excuse me for the extra message", "forgive the late request"},
    // appreciation (placed in the last user turn)
    {"sounds good", "that works great", "perfect then", "wonderful i will see you then"},
    // request
    {"please take a look at the slides", "please let me know a good time",
     "please review the deck when free", "please send over any comments"},
    // greeting (placed in the first user turn)
    {"hi", "hello", "good morning", "hello miss lisa"},
    // hedge
    {"i would suggest the morning", "perhaps an early slot is best",
     "maybe we should start with the summary", "it would probably help to meet early"},
}};

constexpr int kGreetingStrategy = 7;
constexpr int kAppreciationStrategy = 5;

const std::vector<std::string> kOpeningPrompts = {
    "good morning! what can i do for you today?",
    "hello, this is lisa. how can i help?",
};

const std::vector<std::string> kErrorPrompts = {
    "sorry, i did not catch that. could you say it again?",
    "i am not sure i understood. what do you mean?",
    "apologies, that did not come through. once more?",
};

const std::vector<std::string> kClosingPrompts = {
    "alright, see you then.",
    "noted, i will put it on the calendar.",
};

const std::string& pick(const std::vector<std::string>& bank, Prng& rng) {
  return bank[rng.below(static_cast<std::uint32_t>(bank.size()))];
}

// m distinct indices from [0, n), order randomized.
std::vector<int> pick_distinct(int n, int m, Prng& rng) {
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  rng.shuffle(all);
  all.resize(static_cast<std::size_t>(std::min(n, m)));
  return all;
}

int noisy_score(int truth, double p, Prng& rng) {
  const double u = rng.uniform();
  int s = truth;
  if (u < p)
    s -= 1;
  else if (u < 2.0 * p)
    s += 1;
  return std::clamp(s, 1, 4);
}

}  // namespace

std::vector<Dialog> synthesize_corpus(std::uint64_t seed, std::size_t n, const SignalSpec& spec) {
  if (n < 1) throw std::invalid_argument("synthesize_corpus requires n >= 1");
  if (spec.min_turns < 3 || spec.max_turns < spec.min_turns)
    throw std::invalid_argument("synthesize_corpus: invalid turn range");

  std::vector<Dialog> corpus;
  corpus.reserve(n);
  for (std::size_t di = 0; di < n; ++di) {
    Prng rng(derive_seed(seed, di));
    Dialog d;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "synth-%06zu", di + 1);
    d.id = idbuf;

    // Labels first; text afterwards carries the matching signals.
    std::map<Construct, int> truth;
    std::vector<int> non_overall;
    for (Construct c : kAllConstructs) {
      if (c == Construct::kOverall) continue;
      const int l = rng.range(1, 4);
      truth[c] = l;
      non_overall.push_back(l);
    }
    truth[Construct::kOverall] = median_label(non_overall);

    const int total_turns = rng.range(spec.min_turns, spec.max_turns);
    const int user_turns = total_turns / 2;  // system speaks first

    const int l_topic = truth[Construct::kTopic];
    const int l_elab = truth[Construct::kElaboration];
    const int l_struct = truth[Construct::kStructure];
    const int l_task = truth[Construct::kTask];
    const int l_eng = truth[Construct::kEngagement];
    const int l_tt = truth[Construct::kTurnTaking];
    const int l_rep = truth[Construct::kRepair];
    const int l_app = truth[Construct::kAppropriateness];

    // Elaboration: low scores re-use the same content sentence verbatim.
    const int distinct_contents = l_elab;
    std::vector<std::string> contents;
    for (int k = 0; k < distinct_contents; ++k) {
      std::string content =
          rng.uniform() < (static_cast<double>(l_task - 1) / 3.0) ? pick(kTaskStrong, rng)
                                                                  : pick(kTaskWeak, rng);
      content += " regarding";
      for (int t = 0; t < l_topic - 1; ++t) content += " the " + pick(kTopicalTokens, rng);
      for (int t = 0; t < 4 - l_topic; ++t) content += " the " + pick(kOffTopicTokens, rng);
      contents.push_back(std::move(content));
    }

    // Appropriateness: number of distinct politeness strategies per level.
    const int strategies_wanted = l_app == 4 ? 4 : l_app - 1;
    const std::vector<int> strategies = pick_distinct(9, strategies_wanted, rng);
    std::vector<std::vector<std::string>> politeness_per_turn(
        static_cast<std::size_t>(user_turns));
    for (int s : strategies) {
      std::size_t at;
      if (s == kGreetingStrategy)
        at = 0;
      else if (s == kAppreciationStrategy)
        at = static_cast<std::size_t>(user_turns - 1);
      else
        at = rng.below(static_cast<std::uint32_t>(user_turns));
      politeness_per_turn[at].push_back(pick(kPolitenessBanks[static_cast<std::size_t>(s)], rng));
    }

    // Label-independent politeness distractors.
    std::vector<std::vector<std::string>> distractors_per_turn(
        static_cast<std::size_t>(user_turns));
    {
      const int wanted = static_cast<int>(rng.below(5));
      for (int idx : pick_distinct(static_cast<int>(kPolitenessDistractors.size()), wanted, rng)) {
        const Distractor& d = kPolitenessDistractors[static_cast<std::size_t>(idx)];
        std::vector<int> slots;
        for (int u = 0; u < user_turns; ++u) {
          if (d.placement == 1 && u + 2 >= user_turns) continue;
          if (d.placement == 2 && u == 0) continue;
          slots.push_back(u);
        }
        if (slots.empty()) continue;
        const int at = slots[rng.below(static_cast<std::uint32_t>(slots.size()))];
        distractors_per_turn[static_cast<std::size_t>(at)].push_back(d.text);
      }
    }

    // Turn-taking: how many user turns open with an acknowledgment.
    const int acked =
        static_cast<int>(std::lround(static_cast<double>(l_tt - 1) / 3.0 * user_turns));

    // Engagement phrases spread over the dialog.
    std::vector<int> engagement_count(static_cast<std::size_t>(user_turns), 0);
    for (int e = 0; e < l_eng - 1; ++e)
      engagement_count[rng.below(static_cast<std::uint32_t>(user_turns))] += 1;

    int user_index = 0;
    int prompt_index = 0;
    for (int ti = 0; ti < total_turns; ++ti) {
      Turn turn;
      if (ti % 2 == 0) {
        turn.speaker = Speaker::kSystem;
        if (prompt_index == 0)
          turn.text = pick(kOpeningPrompts, rng);
        else if (ti + 1 >= total_turns)
          turn.text = pick(kClosingPrompts, rng);
        else
          turn.text = pick(kErrorPrompts, rng);
        ++prompt_index;
      } else {
        turn.speaker = Speaker::kUser;
        std::vector<std::string> segments;
        if (user_index < acked) segments.push_back(pick(kAckTokens, rng));
        // Repair/clarity markers in every user turn, graded by level; the
        // clarification prompts before turns 2+ keep the history structure
        // a memory over prompt history can exploit.
        for (int idx : pick_distinct(static_cast<int>(kRepairPhrases.size()), l_rep - 1, rng))
          segments.push_back(kRepairPhrases[static_cast<std::size_t>(idx)]);
        for (int m = 0; m < l_struct - 1; ++m) segments.push_back(pick(kDiscourseMarkers, rng));
        segments.push_back(contents[static_cast<std::size_t>(user_index) %
                                    contents.size()]);
        for (int e = 0; e < engagement_count[static_cast<std::size_t>(user_index)]; ++e)
          segments.push_back(pick(kEngagementPhrases, rng));
        for (int f = 0; f < l_eng; ++f) segments.push_back(pick(kFillerTokens, rng));
        for (const std::string& d : distractors_per_turn[static_cast<std::size_t>(user_index)])
          segments.push_back(d);
        for (const std::string& p : politeness_per_turn[static_cast<std::size_t>(user_index)])
          segments.push_back(p);

        std::string text;
        for (const std::string& s : segments) {
          if (!text.empty()) text += ' ';
          text += s;
        }
        turn.text = std::move(text);
        ++user_index;
      }
      d.turns.push_back(std::move(turn));
    }

    for (Construct c : kAllConstructs) {
      std::vector<int> scores;
      for (int r = 0; r < 3; ++r) scores.push_back(noisy_score(truth[c], spec.rater_noise, rng));
      d.ratings.emplace(c, std::move(scores));
    }
    corpus.push_back(std::move(d));
  }
  return corpus;
}

}  // namespace dialogscore

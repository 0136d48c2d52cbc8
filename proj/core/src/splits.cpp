#include "evlab/splits.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "evlab/errors.hpp"
#include "evlab/rng.hpp"
#include "json.hpp"

namespace evlab {

std::vector<std::string> SplitPlan::finetune_folds(int k) const {
  if (k < 1 || k > 3) throw UsageError("fine-tuning fold count must be 1, 2 or 3");
  std::vector<std::string> out = f1;
  if (k >= 2) out.insert(out.end(), f2.begin(), f2.end());
  if (k >= 3) out.insert(out.end(), f3.begin(), f3.end());
  return out;
}

namespace {

template <typename C>
void require_disjoint(const C& a, const C& b, const std::string& what) {
  std::set<std::string> sa(a.begin(), a.end());
  for (const auto& x : b) {
    if (sa.count(x)) throw UsageError("split invariant violated: " + what + " share " + x);
  }
}

}  // namespace

void SplitPlan::check_invariants(std::span<const Trial> trials) const {
  require_disjoint(train_subjects, val_subjects, "train and validation subjects");
  require_disjoint(train_subjects, test_subjects, "train and test subjects");
  require_disjoint(val_subjects, test_subjects, "validation and test subjects");
  if (scenario == Scenario::One) return;

  const std::vector<const std::vector<std::string>*> parts = {&f1, &f2, &f3, &t};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    require_disjoint(pretrain, *parts[i], "pretrain and fine-tune/test trials");
    for (std::size_t j = i + 1; j < parts.size(); ++j) require_disjoint(*parts[i], *parts[j], "F/T partitions");
  }
  std::size_t lo = f1.size(), hi = f1.size();
  for (auto* p : parts) {
    lo = std::min(lo, p->size());
    hi = std::max(hi, p->size());
  }
  if (hi - lo > 1) throw UsageError("split invariant violated: F1/F2/F3/T sizes differ by more than one");

  if (!trials.empty()) {
    std::map<std::string, std::string> subject_of;
    for (const auto& tr : trials) subject_of[tr.id] = tr.subject_id;
    auto subjects = [&](const std::vector<std::string>& ids) {
      std::set<std::string> s;
      for (const auto& id : ids) {
        auto it = subject_of.find(id);
        if (it == subject_of.end()) throw UsageError("split references unknown trial " + id);
        s.insert(it->second);
      }
      return s;
    };
    const auto pre = subjects(pretrain);
    std::set<std::string> ft;
    for (auto* p : parts) {
      auto s = subjects(*p);
      ft.insert(s.begin(), s.end());
    }
    require_disjoint(pre, ft, "pretrain and fine-tune/test subjects");
  }
}

SplitPlan split_scenario1(std::vector<std::string> subjects, std::uint64_t seed) {
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  const std::size_t n = subjects.size();
  if (n < 5) throw UsageError("scenario 1 split needs at least 5 subjects, got " + std::to_string(n));
  Rng rng(seed);
  rng.shuffle(subjects);
  const std::size_t n_train = n * 7 / 10;
  const std::size_t n_test = n * 2 / 10;
  SplitPlan plan;
  plan.scenario = Scenario::One;
  plan.seed = seed;
  auto first = subjects.begin();
  plan.train_subjects.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
  plan.test_subjects.assign(first + static_cast<std::ptrdiff_t>(n_train),
                            first + static_cast<std::ptrdiff_t>(n_train + n_test));
  plan.val_subjects.assign(first + static_cast<std::ptrdiff_t>(n_train + n_test), subjects.end());
  return plan;
}

SplitPlan split_scenario2(const SplitPlan& plan1, std::span<const Trial> trials, std::uint64_t seed) {
  if (plan1.scenario != Scenario::One) throw UsageError("scenario 2 split must start from a scenario 1 plan");
  plan1.check_invariants();
  const std::set<std::string> pre_subjects = [&] {
    std::set<std::string> s(plan1.train_subjects.begin(), plan1.train_subjects.end());
    s.insert(plan1.val_subjects.begin(), plan1.val_subjects.end());
    return s;
  }();
  const std::set<std::string> test_subjects(plan1.test_subjects.begin(), plan1.test_subjects.end());

  SplitPlan plan = plan1;
  plan.scenario = Scenario::Two;
  plan.seed = seed;
  std::vector<std::string> pool;
  for (const auto& t : trials) {
    if (!is_learnable(t)) continue;
    if (pre_subjects.count(t.subject_id)) plan.pretrain.push_back(t.id);
    else if (test_subjects.count(t.subject_id)) pool.push_back(t.id);
  }
  if (pool.size() < 4) {
    throw UsageError("scenario 2 split needs at least 4 test-subject trials, got " + std::to_string(pool.size()));
  }
  std::sort(plan.pretrain.begin(), plan.pretrain.end());
  std::sort(pool.begin(), pool.end());
  Rng rng(seed);
  rng.shuffle(pool);

  const std::size_t base = pool.size() / 4, extra = pool.size() % 4;
  std::vector<std::string>* parts[4] = {&plan.f1, &plan.f2, &plan.f3, &plan.t};
  std::size_t pos = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    parts[i]->assign(pool.begin() + static_cast<std::ptrdiff_t>(pos),
                     pool.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return plan;
}

std::string SplitPlan::to_json() const {
  nlohmann::ordered_json j;
  j["scenario"] = scenario == Scenario::One ? 1 : 2;
  j["seed"] = seed;
  j["train_subjects"] = train_subjects;
  j["val_subjects"] = val_subjects;
  j["test_subjects"] = test_subjects;
  if (scenario == Scenario::Two) {
    j["pretrain"] = pretrain;
    j["f1"] = f1;
    j["f2"] = f2;
    j["f3"] = f3;
    j["t"] = t;
  }
  return j.dump(2) + "\n";
}

SplitPlan SplitPlan::from_json(const std::string& text) {
  SplitPlan plan;
  try {
    const auto j = nlohmann::json::parse(text);
    const int sc = j.at("scenario").get<int>();
    if (sc != 1 && sc != 2) throw UsageError("split plan: scenario must be 1 or 2");
    plan.scenario = sc == 1 ? Scenario::One : Scenario::Two;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.train_subjects = j.at("train_subjects").get<std::vector<std::string>>();
    plan.val_subjects = j.at("val_subjects").get<std::vector<std::string>>();
    plan.test_subjects = j.at("test_subjects").get<std::vector<std::string>>();
    if (plan.scenario == Scenario::Two) {
      plan.pretrain = j.at("pretrain").get<std::vector<std::string>>();
      plan.f1 = j.at("f1").get<std::vector<std::string>>();
      plan.f2 = j.at("f2").get<std::vector<std::string>>();
      plan.f3 = j.at("f3").get<std::vector<std::string>>();
      plan.t = j.at("t").get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw PersistenceError(std::string("split plan: ") + e.what());
  }
  return plan;
}

}  // namespace evlab

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "astrl/expert.hpp"
#include "astrl/trainer.hpp"
#include "fixtures.hpp"

using namespace astrl;

namespace {

int count_fields(const std::string& line)
{
    return 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
}

} // namespace

TEST(Advantages, MatchDirectSums)
{
    const std::vector<double> r{0.5, -1.0, 0.0, 2.0, 30.0}, v{1.0, 0.2, -0.3, 4.0, 10.0};
    for (auto [gamma, lambda] : {std::pair{0.99, 0.95}, std::pair{1.0, 1.0}, std::pair{0.9, 0.0}}) {
        const auto est = compute_advantages(r, v, gamma, lambda);
        const std::size_t n = r.size();
        for (std::size_t t = 0; t < n; ++t) {
            double a = 0.0, w = 1.0;
            for (std::size_t l = t; l < n; ++l) {
                const double next = l + 1 < n ? v[l + 1] : 0.0;
                a += w * (r[l] + gamma * next - v[l]);
                w *= gamma * lambda;
            }
            EXPECT_NEAR(est.advantages[t], a, 1e-12);
            EXPECT_NEAR(est.returns[t], a + v[t], 1e-12);
        }
    }
    // lambda = 1: discounted return minus baseline
    const auto mc = compute_advantages(r, v, 0.5, 1.0);
    EXPECT_NEAR(mc.returns[0], 0.5 - 0.5 + 0.0 + 0.125 * 2.0 + 0.0625 * 30.0, 1e-12);
}

TEST(TrainConfig, Validation)
{
    TrainConfig ok;
    EXPECT_NO_THROW(ok.validate());
    for (auto mutate : std::vector<std::function<void(TrainConfig&)>>{
             [](TrainConfig& c) { c.clip = 1.5; }, [](TrainConfig& c) { c.bc_decay = 0.0; },
             [](TrainConfig& c) { c.bc_decay = 1.2; }, [](TrainConfig& c) { c.lr = 0.0; },
             [](TrainConfig& c) { c.gamma = 0.0; }, [](TrainConfig& c) { c.epochs = 0; }}) {
        TrainConfig c;
        mutate(c);
        try {
            c.validate();
            ADD_FAILURE() << "accepted " << c.to_json().dump();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::Config);
        }
    }
    const auto back = train_config_from_json(ok.to_json());
    EXPECT_EQ(back.to_json(), ok.to_json());
}

TEST(TrainConfig, BcCoefficientIsGeometric)
{
    TrainConfig c;
    EXPECT_DOUBLE_EQ(c.bc_coefficient(0), 1.0);
    for (int k = 1; k < 200; ++k) EXPECT_NEAR(c.bc_coefficient(k) / c.bc_coefficient(k - 1), 0.97, 1e-12);
    c.use_bc = false;
    EXPECT_EQ(c.bc_coefficient(5), 0.0);
}

TEST(Adam, MinimisesAQuadratic)
{
    ad::Param p{"x", "g", ad::Mat::Constant(1, 3, 4.0), ad::Mat::Zero(1, 3)};
    Adam opt({&p}, 0.1);
    for (int i = 0; i < 500; ++i) {
        opt.zero_grad();
        p.grad = 2.0 * (p.value.array() - 1.0).matrix();
        opt.step();
    }
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(p.value(i), 1.0, 1e-2);
}

TEST(PpoLoss, OnPolicyStatistics)
{
    PolicyNet net;
    const auto task = load_task(fixtures::data("tasks/ro_toy.json"));
    Environment env(task);
    PolicySampler sampler(net);
    const auto traj = run_episode(env, sampler, 3);
    std::vector<PpoSample> batch;
    for (const auto& s : traj.steps) batch.push_back({&s.state, s.action, &s.masks, s.log_prob, s.value, 1.0, 0.0});
    TrainConfig cfg;
    LossStats st;
    ppo_loss(net, batch, cfg, false, &st);
    EXPECT_NEAR(st.approx_kl, 0.0, 1e-12);
    EXPECT_EQ(st.clip_fraction, 0.0);
    EXPECT_NEAR(st.policy, -1.0, 1e-12); // ratio 1 everywhere, advantage 1
    EXPECT_GT(st.entropy, 0.0);
}

TEST(Pretrain, LossDecreasesAndIsDeterministic)
{
    const auto task = load_task(fixtures::data("tasks/ro_toy.json"));
    TrainConfig cfg;
    cfg.pretrain_epochs = 5;
    const auto samples = task_expert_samples(task, cfg);
    ASSERT_FALSE(samples.empty());
    PolicyNet a, b;
    const auto ra = pretrain_bc(a, samples, cfg, task.action_config());
    const auto rb = pretrain_bc(b, samples, cfg, task.action_config());
    EXPECT_LT(ra.final_loss, ra.initial_loss);
    EXPECT_EQ(a.fingerprint(), b.fingerprint());
    EXPECT_EQ(ra.loss_curve, rb.loss_curve);
}

TEST(Discriminator, SeparatesExpertsFromRandomStates)
{
    const auto designs = load_netlist_dir(fixtures::data("experts"));
    std::vector<CircuitGraph> pos;
    for (const auto& d : designs) pos.push_back(d.graph);
    const auto task = load_task(fixtures::data("tasks/ota_toy.json"));
    std::vector<CircuitGraph> neg;
    std::set<std::uint64_t> seen;
    for (auto& g : fixtures::visited_states(task, 4, 21))
        if (seen.insert(canonical_hash(g)).second && neg.size() < 48) neg.push_back(std::move(g));
    PolicyNet net;
    const auto policy_before = net.fingerprint();
    TrainConfig cfg;
    cfg.disc_epochs = 40;
    const auto rep = train_discriminator(net, pos, neg, cfg);
    EXPECT_LT(rep.final_loss, rep.initial_loss);
    EXPECT_GE(rep.accuracy, 0.9);
    // policy weights are untouched
    PolicyNet fresh;
    for (std::size_t i = 0; i < net.policy_params().size(); ++i)
        ASSERT_EQ(net.policy_params()[i]->value, fresh.policy_params()[i]->value);
    EXPECT_NE(net.fingerprint(), policy_before);

    try {
        train_discriminator(net, pos, {}, cfg);
        FAIL() << "trained without negatives";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::DegenerateClasses);
    }
}

TEST(Train, ShortRunProducesWellFormedMetrics)
{
    const auto task = load_task(fixtures::data("tasks/ro_toy.json"));
    TrainConfig cfg;
    cfg.iterations = 2;
    cfg.episodes_per_batch = 6;
    cfg.disc_samples = 24;
    cfg.disc_epochs = 2;
    PolicyNet net;
    std::vector<std::string> rows;
    int checkpoints = 0;
    TrainHooks hooks;
    hooks.on_iteration = [&](const IterationMetrics& m) { rows.push_back(metrics_csv_row(m, task)); };
    cfg.checkpoint_every = 1;
    hooks.on_checkpoint = [&](int) { ++checkpoints; };
    const auto sum = train(net, task, cfg, hooks);
    ASSERT_EQ(sum.history.size(), 2u);
    EXPECT_TRUE(sum.discriminator_trained);
    EXPECT_EQ(checkpoints, 2);
    const auto header = metrics_csv_header(task);
    EXPECT_EQ(header.rfind("iteration,episodes,mean_return", 0), 0u);
    EXPECT_NE(header.find("frequency_abs_err"), std::string::npos);
    for (const auto& r : rows) EXPECT_EQ(count_fields(r), count_fields(header));
    for (const auto& m : sum.history) {
        EXPECT_EQ(m.episodes, 6);
        EXPECT_GE(m.simulation_validity, 0.0);
        EXPECT_LE(m.simulation_validity, 1.0);
        EXPECT_LE(m.spec_fulfillment, m.simulation_validity);
    }
    EXPECT_DOUBLE_EQ(sum.history[1].bc_coefficient, 0.97);
}

TEST(Train, StopFlagInterrupts)
{
    const auto task = load_task(fixtures::data("tasks/ro_toy.json"));
    TrainConfig cfg;
    cfg.iterations = 50;
    cfg.use_disc = false;
    cfg.episodes_per_batch = 2;
    std::atomic<bool> stop{false};
    TrainHooks hooks;
    hooks.stop = &stop;
    hooks.on_iteration = [&](const IterationMetrics& m) {
        if (m.iteration == 1) stop = true;
    };
    PolicyNet net;
    const auto sum = train(net, task, cfg, hooks);
    EXPECT_TRUE(sum.interrupted);
    EXPECT_EQ(sum.history.size(), 2u);
}

// Checkpoint container, little-endian:
//   "UWBRLCKP" | u32 version | payload | u64 FNV-1a of everything before it
// payload:
//   string agent-config JSON
//   u32 tensor count, then per tensor: string name | u32 rows | u32 cols | f64[rows*cols] (column-major)
//   string scalar-state JSON (optimisers, scheduler, counters, tracker)
//   string RNG state
//   u64 replay count, then per experience: f64[150] window | f64 action | f64 reward
// Strings are u64 length + bytes.
//
// Standalone actor models ("UWBRLMDL") reuse the container with a payload of
//   string {"network", "head"} JSON | u32 tensor count | tensors as above

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "uwbrl/agent.hpp"
#include "uwbrl/config.hpp"
#include "uwbrl/error.hpp"
#include "uwbrl/metrics.hpp"

namespace uwbrl {

namespace {

constexpr char kMagic[8] = {'U', 'W', 'B', 'R', 'L', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const char* data, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ULL;
    }
    return h;
}

class Writer {
public:
    template <class T>
    void pod(const T& v) {
        const char* p = reinterpret_cast<const char*>(&v);
        buf_.append(p, sizeof(T));
    }
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void str(const std::string& s) {
        pod<std::uint64_t>(s.size());
        buf_.append(s);
    }
    std::string& buffer() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}
    template <class T>
    T pod() {
        T v;
        need(sizeof(T));
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::string str() {
        const auto n = pod<std::uint64_t>();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    void seek(std::size_t p) { pos_ = p; }

private:
    void need(std::size_t n) const {
        if (n > end_ || pos_ > end_ - n) throw CorruptFile("checkpoint payload truncated");
    }
    const std::string& buf_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

Json tracker_json(const EkfState& s, bool started) {
    Json mean = Json::array();
    for (int i = 0; i < 4; ++i) mean.push_back(s.mean(i));
    Json cov = Json::array();
    for (int i = 0; i < 16; ++i) cov.push_back(s.covariance.data()[i]);
    return Json{{"mean", mean}, {"covariance", cov}, {"last_timestamp", s.last_timestamp}, {"started", started}};
}

EkfState tracker_state_from(const Json& j) {
    EkfState s;
    for (int i = 0; i < 4; ++i) s.mean(i) = j.at("mean").at(i).get<double>();
    for (int i = 0; i < 16; ++i) s.covariance.data()[i] = j.at("covariance").at(i).get<double>();
    s.last_timestamp = j.at("last_timestamp").get<double>();
    return s;
}

// JSON cannot hold infinity; the scheduler's initial best is +inf.
Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
double from_nullable(const Json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

class CheckpointIo {
public:
    static std::vector<std::pair<std::string, nn::Matrix*>> tensors(Agent& a) {
        std::vector<std::pair<std::string, nn::Matrix*>> out;
        auto add = [&out](const std::string& prefix, auto& net) {
            for (auto& [name, m] : nn::named_tensors(net)) out.emplace_back(prefix + name, m);
        };
        add("actor/", a.actor_);
        add("critic/", a.critic_);
        add("target_actor/", a.target_actor_);
        add("target_critic/", a.target_critic_);
        auto add_moments = [&out](const std::string& prefix, nn::Adam& opt, const std::vector<nn::Param*>& params) {
            if (opt.first_moments().empty()) return;
            for (std::size_t i = 0; i < params.size(); ++i) {
                out.emplace_back(prefix + "m/" + params[i]->name, &opt.first_moments()[i]);
                out.emplace_back(prefix + "v/" + params[i]->name, &opt.second_moments()[i]);
            }
        };
        add_moments("adam_actor/", a.actor_opt_, a.actor_.params());
        add_moments("adam_critic/", a.critic_opt_, a.critic_.params());
        return out;
    }

    static void save(const Agent& agent, const std::string& path) {
        Agent& a = const_cast<Agent&>(agent);
        Writer w;
        w.bytes(kMagic, sizeof(kMagic));
        w.pod(kVersion);
        w.str(Json(a.cfg_).dump());

        const auto list = tensors(a);
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(list.size()));
        for (const auto& [name, m] : list) {
            w.str(name);
            w.pod<std::uint32_t>(static_cast<std::uint32_t>(m->rows()));
            w.pod<std::uint32_t>(static_cast<std::uint32_t>(m->cols()));
            w.bytes(m->data(), sizeof(double) * static_cast<std::size_t>(m->size()));
        }

        const auto& sch = a.scheduler_;
        Json state{{"actor_lr", a.actor_opt_.lr()},
                   {"critic_lr", a.critic_opt_.lr()},
                   {"actor_adam_steps", a.actor_opt_.steps()},
                   {"critic_adam_steps", a.critic_opt_.steps()},
                   {"scheduler",
                    {{"best", finite_or_null(sch.best())},
                     {"bad_epochs", sch.bad_epochs()},
                     {"released", sch.released()},
                     {"reductions", sch.reductions()}}},
                   {"train_steps", a.train_steps_},
                   {"epsilon_step", a.epsilon_step_},
                   {"episodes_done", a.episodes_done_},
                   {"target_actor_untouched", a.target_actor_untouched_},
                   {"tracker", tracker_json(a.tracker_.state(), a.tracker_.started())}};
        w.str(state.dump());

        std::ostringstream rng;
        rng << a.rng_;
        w.str(rng.str());

        w.pod<std::uint64_t>(a.replay_.size());
        for (std::size_t i = 0; i < a.replay_.size(); ++i) {
            const Experience& e = a.replay_.at(i);
            w.bytes(e.cir.values.data(), sizeof(double) * e.cir.values.size());
            w.pod(e.action_mm);
            w.pod(e.reward);
        }
        const std::uint64_t sum = fnv1a(w.buffer().data(), w.buffer().size());
        w.pod(sum);

        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint " + path);
        out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
        if (!out) throw IoError("failed writing checkpoint " + path);
    }

    static Agent load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open checkpoint " + path);
        std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const std::size_t header = sizeof(kMagic) + sizeof(std::uint32_t);
        if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
            throw CorruptFile("not a checkpoint file: " + path);
        }
        if (buf.size() < header + sizeof(std::uint64_t)) throw CorruptFile("checkpoint truncated: " + path);
        std::uint32_t version = 0;
        std::memcpy(&version, buf.data() + sizeof(kMagic), sizeof(version));
        if (version != kVersion) {
            throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                                  std::to_string(kVersion));
        }
        const std::size_t body_end = buf.size() - sizeof(std::uint64_t);
        std::uint64_t stored = 0;
        std::memcpy(&stored, buf.data() + body_end, sizeof(stored));
        if (stored != fnv1a(buf.data(), body_end)) throw CorruptFile("checkpoint checksum mismatch (truncated?)");

        Reader r(buf, body_end);
        r.seek(header);
        AgentConfig cfg;
        try {
            Json::parse(r.str()).get_to(cfg);
        } catch (const nlohmann::json::exception& e) {
            throw CorruptFile(std::string("checkpoint config unreadable: ") + e.what());
        }
        Agent a(cfg, 0);

        std::map<std::string, nn::Matrix> stored_tensors;
        const auto count = r.pod<std::uint32_t>();
        for (std::uint32_t i = 0; i < count; ++i) {
            std::string name = r.str();
            const auto rows = r.pod<std::uint32_t>();
            const auto cols = r.pod<std::uint32_t>();
            nn::Matrix m(rows, cols);
            r.bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
            stored_tensors.emplace(std::move(name), std::move(m));
        }

        Json state;
        try {
            state = Json::parse(r.str());
        } catch (const nlohmann::json::exception& e) {
            throw CorruptFile(std::string("checkpoint state unreadable: ") + e.what());
        }
        // Optimiser moments exist only after the first step; size them first.
        if (state.at("actor_adam_steps").get<long long>() > 0) {
            for (auto* p : a.actor_.params()) {
                a.actor_opt_.first_moments().push_back(nn::Matrix::Zero(p->value.rows(), p->value.cols()));
                a.actor_opt_.second_moments().push_back(nn::Matrix::Zero(p->value.rows(), p->value.cols()));
            }
        }
        if (state.at("critic_adam_steps").get<long long>() > 0) {
            for (auto* p : a.critic_.params()) {
                a.critic_opt_.first_moments().push_back(nn::Matrix::Zero(p->value.rows(), p->value.cols()));
                a.critic_opt_.second_moments().push_back(nn::Matrix::Zero(p->value.rows(), p->value.cols()));
            }
        }
        const auto list = tensors(a);
        if (list.size() != stored_tensors.size()) throw CorruptFile("checkpoint tensor count mismatch");
        for (const auto& [name, m] : list) {
            const auto it = stored_tensors.find(name);
            if (it == stored_tensors.end()) throw CorruptFile("checkpoint lacks tensor " + name);
            if (it->second.rows() != m->rows() || it->second.cols() != m->cols()) {
                throw CorruptFile("checkpoint tensor " + name + " has the wrong shape");
            }
            *m = it->second;
        }

        a.actor_opt_.set_lr(state.at("actor_lr").get<double>());
        a.critic_opt_.set_lr(state.at("critic_lr").get<double>());
        a.actor_opt_.set_steps(state.at("actor_adam_steps").get<long long>());
        a.critic_opt_.set_steps(state.at("critic_adam_steps").get<long long>());
        const Json& sch = state.at("scheduler");
        a.scheduler_.restore(from_nullable(sch.at("best")), sch.at("bad_epochs").get<int>(),
                             sch.at("released").get<bool>(), sch.at("reductions").get<int>());
        a.train_steps_ = state.at("train_steps").get<long long>();
        a.epsilon_step_ = state.at("epsilon_step").get<long long>();
        a.episodes_done_ = state.at("episodes_done").get<int>();
        a.target_actor_untouched_ = state.at("target_actor_untouched").get<bool>();
        const Json& tr = state.at("tracker");
        a.tracker_.set_state(tracker_state_from(tr), tr.at("started").get<bool>());

        std::istringstream rng(r.str());
        rng >> a.rng_;
        if (!rng) throw CorruptFile("checkpoint RNG state unreadable");

        const auto n = r.pod<std::uint64_t>();
        for (std::uint64_t i = 0; i < n; ++i) {
            Experience e;
            r.bytes(e.cir.values.data(), sizeof(double) * e.cir.values.size());
            e.action_mm = r.pod<double>();
            e.reward = r.pod<double>();
            a.replay_.push(e);
        }
        if (r.pos() != body_end) throw CorruptFile("trailing bytes in checkpoint");
        return a;
    }
};

void Agent::save(const std::string& path) const { CheckpointIo::save(*this, path); }

namespace {

constexpr char kModelMagic[8] = {'U', 'W', 'B', 'R', 'L', 'M', 'D', 'L'};

}  // namespace

void save_model(const nn::ActorNet& model, const std::string& path) {
    nn::ActorNet& net = const_cast<nn::ActorNet&>(model);
    Writer w;
    w.bytes(kModelMagic, sizeof(kModelMagic));
    w.pod(kVersion);
    w.str(Json{{"network", net.shape()}, {"head", net.head() == nn::OutputHead::TanhScaled ? "tanh" : "linear"}}.dump());
    const auto list = nn::named_tensors(net);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(list.size()));
    for (const auto& [name, m] : list) {
        w.str(name);
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(m->rows()));
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(m->cols()));
        w.bytes(m->data(), sizeof(double) * static_cast<std::size_t>(m->size()));
    }
    w.pod(fnv1a(w.buffer().data(), w.buffer().size()));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write model " + path);
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw IoError("failed writing model " + path);
}

nn::ActorNet load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t header = sizeof(kModelMagic) + sizeof(std::uint32_t);
    if (buf.size() < sizeof(kModelMagic) || std::memcmp(buf.data(), kModelMagic, sizeof(kModelMagic)) != 0) {
        throw CorruptFile("not a model file: " + path);
    }
    if (buf.size() < header + sizeof(std::uint64_t)) throw CorruptFile("model truncated: " + path);
    std::uint32_t version = 0;
    std::memcpy(&version, buf.data() + sizeof(kModelMagic), sizeof(version));
    if (version != kVersion) throw VersionMismatch("model version " + std::to_string(version));
    const std::size_t body_end = buf.size() - sizeof(std::uint64_t);
    std::uint64_t stored = 0;
    std::memcpy(&stored, buf.data() + body_end, sizeof(stored));
    if (stored != fnv1a(buf.data(), body_end)) throw CorruptFile("model checksum mismatch (truncated?)");
    Reader r(buf, body_end);
    r.seek(header);
    nn::NetworkShape shape;
    nn::OutputHead head = nn::OutputHead::TanhScaled;
    try {
        const Json meta = Json::parse(r.str());
        meta.at("network").get_to(shape);
        head = meta.at("head").get<std::string>() == "linear" ? nn::OutputHead::Linear : nn::OutputHead::TanhScaled;
    } catch (const std::exception& e) {
        throw CorruptFile(std::string("model metadata unreadable: ") + e.what());
    }
    nn::ActorNet net = nn::ActorNet::zeros(shape, head);
    auto list = nn::named_tensors(net);
    const auto count = r.pod<std::uint32_t>();
    if (count != list.size()) throw CorruptFile("model tensor count mismatch");
    for (auto& [name, m] : list) {
        if (r.str() != name) throw CorruptFile("model tensor order mismatch at " + name);
        const auto rows = r.pod<std::uint32_t>();
        const auto cols = r.pod<std::uint32_t>();
        if (rows != m->rows() || cols != m->cols()) throw CorruptFile("model tensor " + name + " has the wrong shape");
        r.bytes(m->data(), sizeof(double) * static_cast<std::size_t>(m->size()));
    }
    if (r.pos() != body_end) throw CorruptFile("trailing bytes in model");
    return net;
}

Agent Agent::load(const std::string& path) { return CheckpointIo::load(path); }

}  // namespace uwbrl

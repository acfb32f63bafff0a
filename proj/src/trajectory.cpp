#include "flowaudit/trajectory.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flowaudit/errors.hpp"

namespace flowaudit {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Label l) { return l == Label::normal ? "normal" : "risk"; }

std::string to_string(Archetype a) {
    switch (a) {
        case Archetype::normal: return "normal";
        case Archetype::echo_chamber: return "echo_chamber";
        case Archetype::hallucination_cascade: return "hallucination_cascade";
        case Archetype::role_violation: return "role_violation";
        case Archetype::stressor: return "stressor";
    }
    return "normal";
}

Label label_from_string(const std::string& s) {
    if (s == "normal") return Label::normal;
    if (s == "risk") return Label::risk;
    throw SchemaError("unknown label: " + s);
}

Archetype archetype_from_string(const std::string& s) {
    if (s == "normal") return Archetype::normal;
    if (s == "echo_chamber") return Archetype::echo_chamber;
    if (s == "hallucination_cascade") return Archetype::hallucination_cascade;
    if (s == "role_violation") return Archetype::role_violation;
    if (s == "stressor") return Archetype::stressor;
    throw SchemaError("unknown archetype: " + s);
}

int Trajectory::agent_index(const std::string& name) const {
    for (size_t i = 0; i < agents.size(); ++i) {
        if (agents[i] == name) return static_cast<int>(i);
    }
    return -1;
}

void Trajectory::validate() const {
    if (agents.empty()) throw SchemaError("trajectory '" + id + "': empty agent roster");
    if (dim <= 0) throw SchemaError("trajectory '" + id + "': embedding dim must be positive");
    if (rounds.empty()) throw SchemaError("trajectory '" + id + "': empty rounds list");

    std::set<std::string> names(agents.begin(), agents.end());
    if (names.size() != agents.size())
        throw SchemaError("trajectory '" + id + "': duplicate agent names");

    const int n = n_agents();
    const int T = n_rounds();
    for (int t = 0; t < T; ++t) {
        for (const auto& m : rounds[t]) {
            if (m.round != t) throw SchemaError("trajectory '" + id + "': message round mismatch");
            if (m.sender < 0 || m.sender >= n)
                throw SchemaError("trajectory '" + id + "': sender id out of roster");
            if (m.recipients.empty())
                throw SchemaError("trajectory '" + id + "': message with no recipients");
            for (int r : m.recipients) {
                if (r < 0 || r >= n)
                    throw SchemaError("trajectory '" + id + "': recipient id out of roster");
                if (r == m.sender)
                    throw SchemaError("trajectory '" + id + "': sender among recipients");
            }
            if (static_cast<int>(m.embedding.size()) != dim)
                throw SchemaError("trajectory '" + id + "': embedding dimension mismatch");
            for (double v : m.embedding) {
                if (!std::isfinite(v))
                    throw SchemaError("trajectory '" + id + "': non-finite embedding value");
            }
            if (!(m.perplexity >= 0.0) || !std::isfinite(m.perplexity))
                throw SchemaError("trajectory '" + id + "': perplexity must be finite and >= 0");
        }
    }

    if (label == Label::risk) {
        if (!risk) throw SchemaError("trajectory '" + id + "': risk label without annotations");
        if (risk->t_start < 0 || risk->t_start > risk->t_sem || risk->t_sem >= T)
            throw SchemaError("trajectory '" + id + "': need 0 <= t_start <= t_sem < n_rounds");
    }
}

namespace {

double get_finite_number(const ordered_json& j, const char* key, int line) {
    if (!j.contains(key) || !j[key].is_number())
        throw SchemaError("line " + std::to_string(line) + ": missing numeric field '" + key + "'");
    const double v = j[key].get<double>();
    if (!std::isfinite(v))
        throw SchemaError("line " + std::to_string(line) + ": non-finite '" + std::string(key) + "'");
    return v;
}

}  // namespace

Trajectory load_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trajectory file: " + path);

    Trajectory traj;
    std::string line;
    int line_no = 0;
    bool have_header = false;
    std::optional<int> t_start, t_sem;
    std::optional<std::string> archetype_str, instigator;
    int prev_round = -1;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.is_object())
            throw ParseError("line " + std::to_string(line_no) + ": expected a JSON object");

        if (!have_header) {
            if (!j.contains("agents") || !j["agents"].is_array())
                throw SchemaError("line 1: header must carry an 'agents' array");
            for (const auto& a : j["agents"]) traj.agents.push_back(a.get<std::string>());
            traj.dim = j.at("dim").get<int>();
            traj.label = label_from_string(j.at("label").get<std::string>());
            if (j.contains("t_start")) t_start = j["t_start"].get<int>();
            if (j.contains("t_sem")) t_sem = j["t_sem"].get<int>();
            if (j.contains("archetype")) archetype_str = j["archetype"].get<std::string>();
            if (j.contains("instigator")) instigator = j["instigator"].get<std::string>();
            have_header = true;
            continue;
        }

        Message m;
        const std::string agent = j.at("agent").get<std::string>();
        m.sender = traj.agent_index(agent);
        if (m.sender < 0)
            throw SchemaError("line " + std::to_string(line_no) + ": unknown agent '" + agent + "'");
        if (!j.contains("recipients") || !j["recipients"].is_array() || j["recipients"].empty())
            throw SchemaError("line " + std::to_string(line_no) + ": recipients must be non-empty");
        for (const auto& r : j["recipients"]) {
            const int idx = traj.agent_index(r.get<std::string>());
            if (idx < 0)
                throw SchemaError("line " + std::to_string(line_no) + ": unknown recipient");
            m.recipients.push_back(idx);
        }
        m.round = static_cast<int>(get_finite_number(j, "round", line_no));
        if (m.round < 0) throw SchemaError("line " + std::to_string(line_no) + ": negative round");
        if (m.round < prev_round)
            throw SchemaError("line " + std::to_string(line_no) + ": rounds must be non-decreasing");
        prev_round = m.round;

        if (!j.contains("embedding") || !j["embedding"].is_array())
            throw SchemaError("line " + std::to_string(line_no) + ": missing embedding array");
        for (const auto& v : j["embedding"]) {
            const double x = v.get<double>();
            if (!std::isfinite(x))
                throw SchemaError("line " + std::to_string(line_no) + ": non-finite embedding value");
            m.embedding.push_back(x);
        }
        if (static_cast<int>(m.embedding.size()) != traj.dim)
            throw SchemaError("line " + std::to_string(line_no) + ": embedding has dim " +
                              std::to_string(m.embedding.size()) + ", expected " +
                              std::to_string(traj.dim));
        m.perplexity = get_finite_number(j, "ppl", line_no);
        if (m.perplexity < 0.0)
            throw SchemaError("line " + std::to_string(line_no) + ": negative perplexity");
        if (j.contains("text")) m.text = j["text"].get<std::string>();

        const std::string tid = j.at("traj_id").get<std::string>();
        if (traj.id.empty()) {
            traj.id = tid;
        } else if (traj.id != tid) {
            throw SchemaError("line " + std::to_string(line_no) + ": traj_id mismatch");
        }

        if (m.round >= static_cast<int>(traj.rounds.size())) traj.rounds.resize(m.round + 1);
        traj.rounds[m.round].push_back(std::move(m));
    }

    if (!have_header) throw SchemaError("empty trajectory file: " + path);
    if (traj.rounds.empty()) throw SchemaError("trajectory file has no messages: " + path);

    if (traj.label == Label::risk) {
        if (!t_start || !t_sem)
            throw SchemaError("risk trajectory missing t_start/t_sem annotations");
        RiskAnnotations ann;
        ann.t_start = *t_start;
        ann.t_sem = *t_sem;
        ann.archetype = archetype_str ? archetype_from_string(*archetype_str) : Archetype::normal;
        ann.instigator = instigator;
        traj.risk = ann;
    }

    traj.validate();
    return traj;
}

void save_trajectory(const Trajectory& traj, const std::string& path) {
    traj.validate();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);

    ordered_json header;
    header["agents"] = traj.agents;
    header["dim"] = traj.dim;
    header["label"] = to_string(traj.label);
    if (traj.risk) {
        header["t_start"] = traj.risk->t_start;
        header["t_sem"] = traj.risk->t_sem;
        header["archetype"] = to_string(traj.risk->archetype);
        if (traj.risk->instigator) header["instigator"] = *traj.risk->instigator;
    }
    out << header.dump() << '\n';

    for (const auto& round : traj.rounds) {
        for (const auto& m : round) {
            ordered_json j;
            j["traj_id"] = traj.id;
            j["round"] = m.round;
            j["agent"] = traj.agents[m.sender];
            ordered_json rec = ordered_json::array();
            for (int r : m.recipients) rec.push_back(traj.agents[r]);
            j["recipients"] = rec;
            if (m.text) j["text"] = *m.text;
            j["embedding"] = m.embedding;
            j["ppl"] = m.perplexity;
            out << j.dump() << '\n';
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

CarriedSemantics carried_semantics(const Trajectory& traj) {
    const int n = traj.n_agents();
    const int T = traj.n_rounds();
    CarriedSemantics cs;
    cs.per_round.reserve(T);
    cs.active.resize(T, std::vector<uint8_t>(n, 0));
    cs.perplexity.resize(T, std::vector<double>(n, 0.0));

    Matrix current(n, traj.dim, 0.0);
    for (int t = 0; t < T; ++t) {
        for (const auto& m : traj.rounds[t]) {  // later messages overwrite: last one wins
            for (int k = 0; k < traj.dim; ++k) current(m.sender, k) = m.embedding[k];
            cs.active[t][m.sender] = 1;
            cs.perplexity[t][m.sender] = m.perplexity;
        }
        cs.per_round.push_back(current);
    }
    return cs;
}

std::vector<SystemState> carry_forward(std::vector<SystemState> states) {
    if (states.empty()) return states;
    const size_t n = states.front().active.size();
    const size_t d = states.front().semantics.cols();

    std::vector<double> last(n * d, 0.0);         // zero until first activity
    for (auto& st : states) {
        for (size_t i = 0; i < n; ++i) {
            if (st.active[i]) {
                for (size_t k = 0; k < d; ++k) last[i * d + k] = st.semantics(i, k);
            } else {
                for (size_t k = 0; k < d; ++k) st.semantics(i, k) = last[i * d + k];
            }
        }
    }
    return states;
}

}  // namespace flowaudit

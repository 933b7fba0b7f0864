#ifndef TSEOH_GATEWAY_HPP
#define TSEOH_GATEWAY_HPP

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "tseoh/dsl.hpp"
#include "tseoh/model.hpp"

namespace tseoh::gateway {

enum class Strategy { INIT, M1, M2, E1, E2 };

inline constexpr std::array<Strategy, 5> kAllStrategies = {Strategy::INIT, Strategy::M1,
                                                           Strategy::M2, Strategy::E1,
                                                           Strategy::E2};

inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::INIT: return "INIT";
        case Strategy::M1: return "M1";
        case Strategy::M2: return "M2";
        case Strategy::E1: return "E1";
        case Strategy::E2: return "E2";
    }
    return "?";
}

inline std::optional<Strategy> strategy_from_name(const std::string& name) {
    for (Strategy s : kAllStrategies)
        if (strategy_name(s) == name) return s;
    return std::nullopt;
}

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ProviderRequest {
    Strategy strategy = Strategy::INIT;
    std::vector<ChatMessage> messages;
    double temperature = 1.0;
};

struct Completion {
    std::string content;
    json raw_response;
    std::string model;
    double latency_ms = 0.0;
    long prompt_tokens = -1;
    long completion_tokens = -1;
};

class TransportError : public std::runtime_error {
public:
    TransportError(int status, const std::string& what)
        : std::runtime_error(what), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

class ExtractionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FixtureExhaustedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BudgetExceededError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual Completion complete(const ProviderRequest& req) = 0;
};

inline json request_to_json(const ProviderRequest& req, const std::string& model) {
    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    return json{{"model", model}, {"messages", messages}, {"temperature", req.temperature}};
}

inline std::string content_from_response(const json& response) {
    try {
        return response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception&) {
        throw TransportError(0, "malformed chat-completions response: missing choices[0].message.content");
    }
}

// --- live provider ---

struct HttpProviderConfig {
    std::string base_url;  // e.g. https://api.example.com/v1
    std::string model;
    std::string api_key_env = "TSEOH_API_KEY";
    double timeout_seconds = 120.0;
    int max_attempts = 5;
    int max_inflight = 4;
};

/// OpenAI-compatible chat-completions client with exponential-backoff
/// retries on transport failures, 429 and 5xx. 4xx other than 429 fail
/// immediately with their status.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)), inflight_(cfg_.max_inflight) {
        const char* key = std::getenv(cfg_.api_key_env.c_str());
        if (!key || !*key)
            throw std::runtime_error("environment variable " + cfg_.api_key_env + " is not set");
        api_key_ = key;
        auto slash = cfg_.base_url.find('/', cfg_.base_url.find("//") + 2);
        if (cfg_.base_url.find("//") == std::string::npos)
            throw std::runtime_error("base_url must include a scheme: " + cfg_.base_url);
        if (slash == std::string::npos) {
            origin_ = cfg_.base_url;
            path_prefix_.clear();
        } else {
            origin_ = cfg_.base_url.substr(0, slash);
            path_prefix_ = cfg_.base_url.substr(slash);
            while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
        }
    }

    Completion complete(const ProviderRequest& req) override {
        inflight_.acquire();
        struct Release {
            std::counting_semaphore<>* s;
            ~Release() { s->release(); }
        } release{&inflight_};

        const json body = request_to_json(req, cfg_.model);
        const std::string payload = body.dump();
        std::string last_error = "no attempt made";
        for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(static_cast<long>(500.0 * (1 << (attempt - 1)))));
            httplib::Client client(origin_);
            client.set_connection_timeout(std::chrono::duration<double>(cfg_.timeout_seconds));
            client.set_read_timeout(std::chrono::duration<double>(cfg_.timeout_seconds));
            client.set_bearer_token_auth(api_key_);
            auto t0 = std::chrono::steady_clock::now();
            auto res = client.Post(path_prefix_ + "/chat/completions", payload, "application/json");
            auto t1 = std::chrono::steady_clock::now();
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "status " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw TransportError(res->status,
                                     "chat-completions request failed with status " +
                                         std::to_string(res->status) + ": " + res->body);
            Completion c;
            c.raw_response = json::parse(res->body, nullptr, false);
            if (c.raw_response.is_discarded())
                throw TransportError(res->status, "response body is not JSON");
            c.content = content_from_response(c.raw_response);
            c.model = c.raw_response.value("model", cfg_.model);
            c.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            if (c.raw_response.contains("usage")) {
                c.prompt_tokens = c.raw_response["usage"].value("prompt_tokens", -1);
                c.completion_tokens = c.raw_response["usage"].value("completion_tokens", -1);
            }
            return c;
        }
        throw TransportError(0, "chat-completions request failed after " +
                                    std::to_string(cfg_.max_attempts) + " attempts; last: " + last_error);
    }

private:
    HttpProviderConfig cfg_;
    std::string api_key_;
    std::string origin_;
    std::string path_prefix_;
    std::counting_semaphore<> inflight_;
};

// --- scripted provider ---

/// Deterministic provider returning scripted replies keyed by
/// (strategy, per-strategy call index). Script format:
///   { "repeat_last": false, "replies": { "INIT": ["...", ...], ... } }
class MockProvider : public Provider {
public:
    MockProvider() = default;

    static MockProvider from_json(const json& script) {
        MockProvider p;
        p.repeat_last_ = script.value("repeat_last", false);
        for (const auto& [name, arr] : script.at("replies").items()) {
            auto s = strategy_from_name(name);
            if (!s) throw std::runtime_error("mock script: unknown strategy " + name);
            p.replies_[*s] = arr.get<std::vector<std::string>>();
        }
        return p;
    }

    static MockProvider from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open mock script: " + path);
        return from_json(json::parse(in));
    }

    void add_reply(Strategy s, std::string reply) { replies_[s].push_back(std::move(reply)); }
    void set_repeat_last(bool v) { repeat_last_ = v; }

    Completion complete(const ProviderRequest& req) override {
        std::lock_guard lock(*mu_);
        auto& list = replies_[req.strategy];
        std::size_t idx = counters_[req.strategy]++;
        if (idx >= list.size()) {
            if (repeat_last_ && !list.empty()) {
                idx = list.size() - 1;
            } else {
                throw FixtureExhaustedError("mock fixtures exhausted for strategy " +
                                            strategy_name(req.strategy));
            }
        }
        Completion c;
        c.content = list[idx];
        c.model = "mock";
        c.raw_response = json{{"model", "mock"},
                              {"choices", json::array({json{{"message", json{{"role", "assistant"},
                                                                             {"content", c.content}}}}})}};
        return c;
    }

private:
    std::map<Strategy, std::vector<std::string>> replies_;
    std::map<Strategy, std::size_t> counters_;
    bool repeat_last_ = false;
    // behind a pointer so scripted providers stay movable
    std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
};

// --- record / replay ---

inline std::string fixture_file_name(std::size_t run_seq, Strategy s, std::size_t call_index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04zu_%s_%zu.json", run_seq, strategy_name(s).c_str(),
                  call_index);
    return buf;
}

/// Persists every request/response pair to a fixture directory before the
/// response is handed to the caller, so any live run can later be replayed.
class RecordingProvider : public Provider {
public:
    RecordingProvider(std::shared_ptr<Provider> inner, std::string dir)
        : inner_(std::move(inner)), dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    Completion complete(const ProviderRequest& req) override {
        Completion c = inner_->complete(req);
        std::lock_guard lock(mu_);
        std::size_t call_idx = per_strategy_[req.strategy]++;
        json record{{"strategy", strategy_name(req.strategy)},
                    {"request", request_to_json(req, c.model)},
                    {"response", c.raw_response}};
        auto path = std::filesystem::path(dir_) / fixture_file_name(seq_++, req.strategy, call_idx);
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write fixture: " + path.string());
        out << record.dump(2) << "\n";
        out.flush();
        return c;
    }

private:
    std::shared_ptr<Provider> inner_;
    std::string dir_;
    std::size_t seq_ = 0;
    std::map<Strategy, std::size_t> per_strategy_;
    std::mutex mu_;
};

/// Replays a recorded fixture directory in run order. The requested
/// strategy must match the recorded one; exhausting the fixtures aborts
/// the run.
class ReplayProvider : public Provider {
public:
    explicit ReplayProvider(const std::string& dir) {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(dir))
            if (entry.path().extension() == ".json") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            std::ifstream in(f);
            records_.push_back(json::parse(in));
        }
    }

    Completion complete(const ProviderRequest& req) override {
        std::lock_guard lock(mu_);
        if (next_ >= records_.size())
            throw FixtureExhaustedError("replay fixtures exhausted after " +
                                        std::to_string(records_.size()) + " calls");
        const json& rec = records_[next_++];
        std::string recorded = rec.value("strategy", "");
        if (recorded != strategy_name(req.strategy))
            throw std::runtime_error("replay mismatch: fixture " + std::to_string(next_ - 1) +
                                     " recorded strategy " + recorded + ", requested " +
                                     strategy_name(req.strategy));
        Completion c;
        c.raw_response = rec.at("response");
        c.content = content_from_response(c.raw_response);
        c.model = c.raw_response.value("model", "replay");
        return c;
    }

private:
    std::vector<json> records_;
    std::size_t next_ = 0;
    std::mutex mu_;
};

/// Caps the total number of provider calls in a run.
class BudgetedProvider : public Provider {
public:
    BudgetedProvider(std::shared_ptr<Provider> inner, std::size_t max_calls)
        : inner_(std::move(inner)), max_calls_(max_calls) {}

    Completion complete(const ProviderRequest& req) override {
        {
            std::lock_guard lock(mu_);
            if (calls_ >= max_calls_)
                throw BudgetExceededError("provider call budget of " + std::to_string(max_calls_) +
                                          " exceeded");
            ++calls_;
        }
        return inner_->complete(req);
    }

    std::size_t calls() const { return calls_; }

private:
    std::shared_ptr<Provider> inner_;
    std::size_t max_calls_;
    std::size_t calls_ = 0;
    std::mutex mu_;
};

// --- prompt templates ---

inline std::string vocabulary_doc() {
    return "Task variables: cpu, io, bw, mem (resource demands), arrival (arrival time), "
           "exec (execution time), wait (time waited so far).\n"
           "Candidate-server variables: free_cpu, free_io, free_bw, free_mem (free resources), "
           "cap_cpu, cap_io, cap_bw, cap_mem (total capacities).\n"
           "Global variables: now (current time), pending (number of waiting tasks), "
           "m_servers (number of servers).";
}

inline std::string grammar_doc() {
    return "The scoring function is a single arithmetic expression over the variables above.\n"
           "Allowed: numeric literals; + - * /; unary minus; min(a,b); max(a,b); pow(a,b); "
           "abs(x); log(x); exp(x); sqrt(x); if(a CMP b, then, else) with CMP one of < <= > >= ==.\n"
           "Division by (near) zero, log of non-positive and sqrt of negative values evaluate to 0. "
           "No loops, assignments or user-defined names.";
}

inline std::string objectives_doc() {
    return "maximizing resource utilization and minimizing task running time";
}

struct PromptBundle {
    Strategy strategy = Strategy::INIT;
    std::vector<ChatMessage> messages;
    bool has_parent = false;
};

struct ParentSnippet {
    std::string description;
    std::string source;
};

/// Strategy templates live as files so they can be versioned and swapped
/// without rebuilding. Expected files: system.txt, init.txt, m1.txt,
/// m2.txt, e1.txt, e2.txt, code.txt.
class PromptLibrary {
public:
    static PromptLibrary load(const std::string& dir) {
        PromptLibrary lib;
        for (const char* name : {"system", "init", "m1", "m2", "e1", "e2", "code"}) {
            auto path = std::filesystem::path(dir) / (std::string(name) + ".txt");
            std::ifstream in(path);
            if (!in) throw std::runtime_error("missing prompt template: " + path.string());
            std::ostringstream buf;
            buf << in.rdbuf();
            lib.templates_[name] = buf.str();
        }
        return lib;
    }

    std::string description_template(Strategy s) const {
        switch (s) {
            case Strategy::INIT: return templates_.at("init");
            case Strategy::M1: return templates_.at("m1");
            case Strategy::M2: return templates_.at("m2");
            case Strategy::E1: return templates_.at("e1");
            case Strategy::E2: return templates_.at("e2");
        }
        return {};
    }
    std::string code_template() const { return templates_.at("code"); }
    std::string system_template() const { return templates_.at("system"); }

private:
    std::map<std::string, std::string> templates_;
};

inline void replace_all(std::string& text, std::string_view key, std::string_view value) {
    std::size_t at = 0;
    while ((at = text.find(key, at)) != std::string::npos) {
        text.replace(at, key.size(), value);
        at += value.size();
    }
}

inline std::string instantiate(std::string tpl, const std::optional<ParentSnippet>& parent,
                               const std::string& description = {}) {
    replace_all(tpl, "{{vocabulary}}", vocabulary_doc());
    replace_all(tpl, "{{grammar}}", grammar_doc());
    replace_all(tpl, "{{objectives}}", objectives_doc());
    replace_all(tpl, "{{parent_description}}", parent ? parent->description : "");
    replace_all(tpl, "{{parent_source}}", parent ? parent->source : "");
    replace_all(tpl, "{{description}}", description);
    return tpl;
}

inline PromptBundle render_prompt(const PromptLibrary& lib, Strategy strategy,
                                  const std::optional<ParentSnippet>& parent) {
    if (strategy == Strategy::INIT && parent)
        throw std::invalid_argument("INIT takes no parent heuristic");
    if (strategy != Strategy::INIT && !parent)
        throw std::invalid_argument("strategy " + strategy_name(strategy) +
                                    " requires a parent heuristic");
    PromptBundle b;
    b.strategy = strategy;
    b.has_parent = parent.has_value();
    b.messages.push_back({"system", instantiate(lib.system_template(), parent)});
    b.messages.push_back({"user", instantiate(lib.description_template(strategy), parent)});
    return b;
}

inline PromptBundle render_code_prompt(const PromptLibrary& lib, Strategy strategy,
                                       const std::string& description) {
    PromptBundle b;
    b.strategy = strategy;
    b.messages.push_back({"system", instantiate(lib.system_template(), std::nullopt)});
    b.messages.push_back({"user", instantiate(lib.code_template(), std::nullopt, description)});
    return b;
}

// --- response extraction ---

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

inline std::optional<std::string> extract_description(const std::string& text) {
    auto open = text.find("<description>");
    if (open == std::string::npos) return std::nullopt;
    auto start = open + std::string_view("<description>").size();
    auto close = text.find("</description>", start);
    if (close == std::string::npos) return std::nullopt;
    std::string d = trim(std::string_view(text).substr(start, close - start));
    if (d.empty()) return std::nullopt;
    return d;
}

inline std::optional<std::string> extract_code_block(const std::string& text) {
    auto open = text.find("```");
    if (open == std::string::npos) return std::nullopt;
    auto body_start = text.find('\n', open);
    if (body_start == std::string::npos) return std::nullopt;
    ++body_start;
    auto close = text.find("```", body_start);
    if (close == std::string::npos) return std::nullopt;
    std::string code = trim(std::string_view(text).substr(body_start, close - body_start));
    if (code.empty()) return std::nullopt;
    return code;
}

/// Canonical reply shapes; extraction is their inverse.
inline std::string format_description_reply(const std::string& description) {
    return "<description>\n" + description + "\n</description>";
}

inline std::string format_code_reply(const std::string& source) {
    return "```\n" + source + "\n```";
}

inline double default_temperature(Strategy s) {
    switch (s) {
        case Strategy::INIT: return 1.0;
        case Strategy::M1: return 1.0;
        case Strategy::M2: return 1.0;
        case Strategy::E1: return 0.7;
        case Strategy::E2: return 0.2;
    }
    return 1.0;
}

struct GenerationResult {
    std::string raw_description_reply;
    std::string raw_code_reply;
    std::string description;
    std::string source;
    std::string model;
    double latency_ms = 0.0;
};

/// Two-phase generation: one call for the heuristic description, a local
/// deterministic rewrite folding it into the code prompt, and a second
/// call for the scoring expression.
inline GenerationResult generate_heuristic(const PromptLibrary& lib, Strategy strategy,
                                           const std::optional<ParentSnippet>& parent,
                                           Provider& provider,
                                           std::optional<double> temperature = std::nullopt) {
    const double temp = temperature.value_or(default_temperature(strategy));

    PromptBundle desc_prompt = render_prompt(lib, strategy, parent);
    Completion c1 = provider.complete({strategy, desc_prompt.messages, temp});
    auto description = extract_description(c1.content);
    if (!description)
        throw ExtractionError("reply contains no non-empty <description> block");

    PromptBundle code_prompt = render_code_prompt(lib, strategy, *description);
    Completion c2 = provider.complete({strategy, code_prompt.messages, temp});
    auto source = extract_code_block(c2.content);
    if (!source) throw ExtractionError("reply contains no fenced code block");

    GenerationResult r;
    r.raw_description_reply = c1.content;
    r.raw_code_reply = c2.content;
    r.description = *description;
    r.source = *source;
    r.model = c1.model;
    r.latency_ms = c1.latency_ms + c2.latency_ms;
    return r;
}

}  // namespace tseoh::gateway

#endif  // TSEOH_GATEWAY_HPP

#pragma once

#include <atomic>
#include <string>
#include <vector>

#include "conceptforge/backend.hpp"

namespace conceptforge {

/// VQA fixture that replays a fixed answer list, one per call, then answers "" (skip).
class ScriptedVqa final : public VqaModel {
public:
    explicit ScriptedVqa(std::vector<std::string> answers) : answers_(std::move(answers)) {}

    std::string answer(const GeneratedImage&, const std::string& question) const override {
        const std::size_t i = next_.fetch_add(1);
        last_question_ = question;
        return i < answers_.size() ? answers_[i] : std::string{};
    }

    std::size_t calls() const noexcept { return next_.load(); }
    const std::string& last_question() const noexcept { return last_question_; }

private:
    std::vector<std::string> answers_;
    mutable std::atomic<std::size_t> next_{0};
    mutable std::string last_question_;
};

} // namespace conceptforge

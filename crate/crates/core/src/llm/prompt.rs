//! Prompt construction from an agent's profile and memory.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agent::AgentState;

pub const SYSTEM_TEXT: &str = "You are a traveler in a day-to-day route choice simulation. \
Each day you choose one route for your trip, and you learn from the travel times you experience.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Profile,
    Task,
    Experiences,
    Guidance,
    OutputFormat,
}

impl Section {
    pub const ORDER: [Section; 5] = [
        Section::Profile,
        Section::Task,
        Section::Experiences,
        Section::Guidance,
        Section::OutputFormat,
    ];
}

/// Scenario-level wording shared by every agent of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    /// Free text describing the trip and the network, inserted into the task section.
    pub scenario_text: String,
    /// Mention the daily bonus in the task and experiences sections.
    pub bonus: bool,
    pub currency: String,
}

impl Default for PromptContext {
    fn default() -> Self {
        PromptContext {
            scenario_text: String::new(),
            bonus: false,
            currency: "RMB".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub sections: Vec<(Section, String)>,
}

impl PromptBundle {
    pub fn section(&self, which: Section) -> &str {
        self.sections
            .iter()
            .find(|(s, _)| *s == which)
            .map(|(_, t)| t.as_str())
            .unwrap_or("")
    }
}

/// Round to two decimals and drop trailing zeros: 38 -> "38", 0.20 -> "0.2".
pub fn compact_number(x: f64) -> String {
    let s = format!("{:.2}", x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn route_list(route_count: usize) -> String {
    let labels: Vec<String> = (1..=route_count).map(|r| format!("route {r}")).collect();
    match labels.split_last() {
        Some((last, init)) if !init.is_empty() => format!("{} or {}", init.join(", "), last),
        Some((last, _)) => last.clone(),
        None => String::new(),
    }
}

fn task_section(route_count: usize, ctx: &PromptContext) -> String {
    let mut text = String::from("Your task is to choose a route for your trip tomorrow. ");
    if !ctx.scenario_text.is_empty() {
        text.push_str(ctx.scenario_text.trim());
        text.push(' ');
    }
    let _ = write!(
        text,
        "There are {route_count} available routes: {}. The travel time of each route depends on how many \
         travelers choose it, and all travelers make their choices at the same time.",
        route_list(route_count)
    );
    if ctx.bonus {
        let _ = write!(
            text,
            " Each day you receive a bonus in {} that is larger when your travel time is shorter.",
            ctx.currency
        );
    }
    text
}

fn experiences_section(state: &AgentState, ctx: &PromptContext) -> String {
    let mut text = String::new();
    if let Some(y) = &state.yesterday {
        let chosen = y.chosen + 1;
        let all_known = y.observed.iter().all(Option::is_some);
        if all_known {
            let times: Vec<String> = y
                .observed
                .iter()
                .enumerate()
                .map(|(r, t)| format!("route {}'s travel time was {}", r + 1, compact_number(t.unwrap_or(0.0))))
                .collect();
            let _ = write!(text, "Yesterday: {}, and you chose route {chosen}.", times.join(", "));
        } else {
            let t = y.observed.get(y.chosen).copied().flatten().unwrap_or(0.0);
            let _ = write!(
                text,
                "Yesterday: you chose route {chosen}, and its travel time was {}.",
                compact_number(t)
            );
        }
        if ctx.bonus {
            let _ = write!(
                text,
                " Yesterday, you received a {} {cur} bonus, bringing your cumulative bonus to {:.2} {cur}.",
                compact_number(y.bonus),
                state.cumulative_bonus,
                cur = ctx.currency
            );
        }
        text.push(' ');
    }
    let per_route: Vec<String> = state
        .memories
        .iter()
        .enumerate()
        .map(|(r, m)| match m.ewmatt {
            Some(e) => {
                let times = if m.chosen_count == 1 { "time" } else { "times" };
                format!(
                    "route {}: Chosen {} {times}, with an Experience Weighted Moving Average Travel Time of {:.2}",
                    r + 1,
                    m.chosen_count,
                    e
                )
            }
            None => format!("route {}: not yet chosen", r + 1),
        })
        .collect();
    if state.days_experienced == 0 {
        let _ = write!(text, "You have no travel experience yet: {}.", per_route.join("; "));
    } else {
        // the upcoming decision day, counted from 1
        let _ = write!(
            text,
            "Your historical travel experiences for each route over the past {} days are as follows: {}.",
            state.days_experienced + 1,
            per_route.join("; ")
        );
    }
    text
}

const GUIDANCE: &str = "Think step-by-step before deciding. Other travelers learn and adapt as well, so \
yesterday's travel times may not repeat. Optimize your route choice by considering both well-traveled \
routes and less explored options.";

fn output_format_section(route_count: usize) -> String {
    format!(
        "Your response should be in JSON format with two keys, \"reason\" first and then \"choice\", for example: \
         {{\"reason\": \"<your reasoning>\", \"choice\": \"route 1\"}}. The choice must be one of {}.",
        route_list(route_count)
    )
}

/// Builds the prompt for `state`. Pure: identical inputs give byte-identical text.
///
/// # Panics
/// If `route_count` differs from the number of route memories.
pub fn build_prompt(state: &AgentState, route_count: usize, ctx: &PromptContext) -> PromptBundle {
    assert_eq!(
        state.route_count(),
        route_count,
        "memories must be sized to the route set"
    );
    let sections = vec![
        (Section::Profile, state.profile.describe()),
        (Section::Task, task_section(route_count, ctx)),
        (Section::Experiences, experiences_section(state, ctx)),
        (Section::Guidance, GUIDANCE.to_string()),
        (Section::OutputFormat, output_format_section(route_count)),
    ];
    let user_text = sections
        .iter()
        .map(|(_, t)| t.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");
    PromptBundle {
        system_text: SYSTEM_TEXT.to_string(),
        user_text,
        sections,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{sample_profile, Yesterday};
    use crate::network::Od;

    #[test]
    fn compact_numbers() {
        assert_eq!(compact_number(38.0), "38");
        assert_eq!(compact_number(0.2), "0.2");
        assert_eq!(compact_number(0.04), "0.04");
        assert_eq!(compact_number(74.336), "74.34");
        assert_eq!(compact_number(0.0), "0");
        assert_eq!(compact_number(-0.001), "0");
    }

    #[test]
    fn route_lists() {
        assert_eq!(route_list(1), "route 1");
        assert_eq!(route_list(2), "route 1 or route 2");
        assert_eq!(route_list(3), "route 1, route 2 or route 3");
    }

    #[test]
    fn day_one_prompt() {
        let s = AgentState::new(0, Od::new(1, 2), sample_profile(3), 1, vec![6.0, 6.0], 0);
        let p = build_prompt(&s, 2, &PromptContext::default());
        let exp = p.section(Section::Experiences);
        assert_eq!(
            exp,
            "You have no travel experience yet: route 1: not yet chosen; route 2: not yet chosen."
        );
        assert!(!p.user_text.contains("Yesterday"));
        assert_eq!(p, build_prompt(&s, 2, &PromptContext::default()));
    }

    #[test]
    fn chosen_only_yesterday() {
        let mut s = AgentState::new(0, Od::new(1, 12), sample_profile(3), 20, vec![30.0, 31.0, 33.0], 0);
        s.update_memory(2, &[None, None, Some(74.336)], 0.0, 0.2).unwrap();
        let p = build_prompt(&s, 3, &PromptContext::default());
        assert_eq!(
            p.section(Section::Experiences),
            "Yesterday: you chose route 3, and its travel time was 74.34. Your historical travel experiences \
             for each route over the past 2 days are as follows: route 1: not yet chosen; route 2: not yet \
             chosen; route 3: Chosen 1 time, with an Experience Weighted Moving Average Travel Time of 74.34."
        );
    }

    #[test]
    fn sections_in_order() {
        let mut s = AgentState::new(0, Od::new(1, 2), sample_profile(9), 1, vec![6.0, 6.0], 0);
        s.yesterday = Some(Yesterday {
            chosen: 0,
            observed: vec![Some(20.0), Some(24.0)],
            bonus: 0.4,
        });
        s.days_experienced = 1;
        let p = build_prompt(&s, 2, &PromptContext::default());
        let mut at = 0;
        for (sec, (label, text)) in Section::ORDER.iter().zip(&p.sections) {
            assert_eq!(sec, label);
            let pos = p.user_text[at..].find(text.as_str()).expect("section present") + at;
            at = pos + text.len();
        }
        assert!(p.section(Section::OutputFormat).contains("JSON format"));
        let fmt = p.section(Section::OutputFormat);
        assert!(fmt.find("\"reason\"").unwrap() < fmt.find("\"choice\"").unwrap());
        assert!(p.section(Section::Guidance).contains("step-by-step"));
    }
}

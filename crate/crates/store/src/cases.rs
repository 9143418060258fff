use rusqlite::{params, OptionalExtension};
use semindex_core::cbr::{problem_similarity, top_k, Scored, SequenceMode, SimilarityMeasure};
use semindex_core::Situation;

use crate::{format_ts, Assessment, Case, EpisodeKey, Result, Store, StoreError};

impl Store {
    /// Stores `case` under a fresh id, which is returned. The given id is
    /// ignored.
    pub fn add_case(&mut self, case: &Case) -> Result<i64> {
        if case.problem.is_empty() {
            return Err(StoreError::EmptyProblem);
        }
        for key in &case.problem {
            let found: i64 = self.conn().query_row(
                "SELECT count(*) FROM episodes WHERE id = ?1 AND ts = ?2",
                params![key.id, format_ts(&key.ts)],
                |r| r.get(0),
            )?;
            if found == 0 {
                return Err(StoreError::UnknownEpisode(key.clone()));
            }
        }
        let solution = case.solution.iter().map(|r| self.prepare_instance(r)).collect::<Result<Vec<_>>>()?;
        let assessment = case.assessment.clone().unwrap_or_default();
        self.conn().execute(
            "INSERT INTO cases (problem_episode_ids_json, solution_json, assessment_text, outcome_score) VALUES (?1, ?2, ?3, ?4)",
            params![
                serde_json::to_string(&case.problem)?,
                serde_json::to_string(&solution)?,
                assessment.text,
                assessment.score
            ],
        )?;
        Ok(self.conn().last_insert_rowid())
    }

    pub fn get_case(&self, id: i64) -> Result<Case> {
        self.conn()
            .query_row(
                "SELECT id, problem_episode_ids_json, solution_json, assessment_text, outcome_score FROM cases WHERE id = ?1",
                [id],
                raw_case,
            )
            .optional()?
            .map(decode_case)
            .transpose()?
            .ok_or(StoreError::UnknownCase(id))
    }

    /// All cases by ascending id.
    pub fn cases(&self) -> Result<Vec<Case>> {
        let mut stmt = self.conn().prepare(
            "SELECT id, problem_episode_ids_json, solution_json, assessment_text, outcome_score FROM cases ORDER BY id",
        )?;
        let rows = stmt.query_map([], raw_case)?;
        rows.map(|r| decode_case(r?)).collect()
    }

    /// The problem of a case as situations, oldest episode first.
    pub fn problem_situations(&self, case: &Case) -> Result<Vec<Situation>> {
        case.problem
            .iter()
            .map(|k| {
                self.get_episode(k)?
                    .map(|e| e.situation())
                    .ok_or_else(|| StoreError::UnknownEpisode(k.clone()))
            })
            .collect()
    }

    /// Linear scan over the case base; the best `k` by score, ties by id.
    pub fn retrieve(
        &self,
        query: &Situation,
        k: usize,
        measure: &dyn SimilarityMeasure,
        mode: SequenceMode,
    ) -> Result<Vec<(Case, f64)>> {
        let cases = self.cases()?;
        let mut scored = Vec::with_capacity(cases.len());
        for c in &cases {
            let problem = self.problem_situations(c)?;
            scored.push(Scored { id: c.id, score: problem_similarity(measure, query, &problem, mode) });
        }
        let by_id: std::collections::HashMap<i64, &Case> = cases.iter().map(|c| (c.id, c)).collect();
        Ok(top_k(scored, k).into_iter().map(|s| (by_id[&s.id].clone(), s.score)).collect())
    }
}

type RawCase = (i64, String, String, Option<String>, Option<f64>);

fn raw_case(r: &rusqlite::Row<'_>) -> rusqlite::Result<RawCase> {
    Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?))
}

fn decode_case((id, problem, solution, text, score): RawCase) -> Result<Case> {
    let problem: Vec<EpisodeKey> = serde_json::from_str(&problem)?;
    let assessment = (text.is_some() || score.is_some()).then_some(Assessment { text, score });
    Ok(Case { id, problem, solution: serde_json::from_str(&solution)?, assessment })
}

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semindex_core::cbr::{problem_similarity, DefaultSimilarity, SequenceMode};
use semindex_core::indexer::{delete_node, insert_node};
use semindex_core::keys::{is_instance, parse_key};
use semindex_core::multiaxial::{expression_matches, parse_multiaxial};
use semindex_core::random::{self, Edit, Shape};
use semindex_core::{index_hierarchy, oracle, parse_hierarchy, ConceptName, IndexedHierarchy, Key};
use semindex_store::*;

const ANAMNESIS: &str = "axis A \"anamnesis\"
anamnesis
  pain pattern
    localization ?single
      spine
      head
      shoulder/arm/hand
    quality
    intensity ?single
      strong
      very strong
  feeling
";

const TIME: &str = "axis T \"time\"
time
  acute
  chronic
    recurring
";

fn key(s: &str) -> Key {
    parse_key(s).unwrap()
}

fn ts(sec: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(1_700_000_000 + sec, 123_456_789).unwrap()
}

fn episode(id: &str, sec: i64, instances: Vec<InstanceRecord>) -> Episode {
    Episode { id: id.into(), timestamp: ts(sec), subject: "p1".into(), instances, meta: EpisodeMeta::default() }
}

fn indexed(text: &str) -> IndexedHierarchy {
    index_hierarchy(&parse_hierarchy(text).unwrap()).unwrap()
}

fn seeded() -> Store {
    let mut s = Store::in_memory().unwrap();
    s.register_axis(&indexed(ANAMNESIS)).unwrap();
    s.register_axis(&indexed(TIME)).unwrap();
    s
}

fn node_key(s: &Store, axis: &str, path: &[&str]) -> Key {
    let st = s.axis(axis).unwrap();
    let names: Vec<ConceptName> = path.iter().map(|p| ConceptName::from(*p)).collect();
    st.resolve(&InstancePath::Node(names)).unwrap()
}

#[test]
fn durable_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (snapshot, stored) = {
        let mut s = open_store(dir.path()).unwrap();
        s.register_axis(&indexed(ANAMNESIS)).unwrap();
        let head = node_key(&s, "A", &["anamnesis", "pain pattern", "localization", "head"]);
        let mut e = episode("e1", 0, vec![InstanceRecord::affirmed("A", head)]);
        e.meta.time = Some("morning".into());
        e.instances.push(InstanceRecord { value: Some("7/10".into()), ..InstanceRecord::negated("A", key("[0,0,2,0]")) });
        s.put_episode(&e).unwrap();
        s.put_dconcepts("dx", "dconcept \"pain\":\n  requires [(A[0,0])]\n").unwrap();
        (s.catalog_snapshot().unwrap(), s.get_episode(&e.key()).unwrap().unwrap())
    };
    assert!(dir.path().join(DB_FILE).exists());
    let s = open_store(dir.path()).unwrap();
    assert_eq!(s.catalog_snapshot().unwrap(), snapshot);
    assert_eq!(s.get_episode(&stored.key()).unwrap().unwrap(), stored);
    assert_eq!(stored.instances[0].path.as_ref().map(|p| matches!(p, InstancePath::Node(_))), Some(true));
    assert_eq!(s.query_by_key("A", &key("[0,0]")).unwrap().len(), 2);
    assert!(s.get_dconcepts("dx").unwrap().contains("pain"));
}

#[test]
fn rejects_other_schema_version() {
    let dir = tempfile::tempdir().unwrap();
    drop(open_store(dir.path()).unwrap());
    let conn = rusqlite::Connection::open(dir.path().join(DB_FILE)).unwrap();
    conn.execute("UPDATE meta SET value = '99' WHERE key = 'schema_version'", []).unwrap();
    drop(conn);
    assert!(matches!(open_store(dir.path()), Err(StoreError::SchemaVersion { .. })));
}

#[test]
fn validation() {
    let mut s = seeded();
    assert!(matches!(s.register_axis(&indexed(TIME)), Err(StoreError::AxisExists(_))));
    assert!(matches!(s.put_episode(&episode("e", 0, vec![])), Err(StoreError::EmptyEpisode)));
    let bad_axis = episode("e", 0, vec![InstanceRecord::affirmed("Z", key("[0]"))]);
    assert!(matches!(s.put_episode(&bad_axis), Err(StoreError::UnknownAxis(_))));
    let bad_key = episode("e", 0, vec![InstanceRecord::affirmed("A", key("[0,7]"))]);
    assert!(matches!(s.put_episode(&bad_key), Err(StoreError::InvalidKey { .. })));
    let bad_path = episode(
        "e",
        0,
        vec![InstanceRecord {
            path: Some(InstancePath::Concept("feeling".into())),
            ..InstanceRecord::affirmed("A", key("[0,0]"))
        }],
    );
    assert!(matches!(s.put_episode(&bad_path), Err(StoreError::InvalidPath { .. })));
    let ok = episode("e", 0, vec![InstanceRecord::affirmed("T", key("[0,1]"))]);
    s.put_episode(&ok).unwrap();
    assert!(matches!(s.put_episode(&ok), Err(StoreError::DuplicateEpisode(_))));
    // the same id at another time is a separate episode
    s.put_episode(&episode("e", 1, ok.instances.clone())).unwrap();
    assert_eq!(s.episodes_with_id("e").unwrap().len(), 2);
    assert!(matches!(s.query_by_key("Q", &key("[0]")), Err(StoreError::UnknownAxis(_))));
    let missing = Case { id: 0, problem: vec![EpisodeKey { id: "nope".into(), ts: ts(0) }], solution: vec![], assessment: None };
    assert!(matches!(s.add_case(&missing), Err(StoreError::UnknownEpisode(_))));
    assert!(matches!(
        s.add_case(&Case { problem: vec![], ..missing }),
        Err(StoreError::EmptyProblem)
    ));
}

#[test]
fn ancestor_check_on_the_example() {
    let s = seeded();
    let head = node_key(&s, "A", &["anamnesis", "pain pattern", "localization", "head"]);
    let st = s.axis("A").unwrap();
    let ck = |c: &str| st.index.concept_key(&c.into()).unwrap().clone();
    assert!(s.ancestor_check("A", &head, &ck("localization")).unwrap());
    assert!(s.ancestor_check("A", &head, &ck("pain pattern")).unwrap());
    assert!(s.ancestor_check("A", &head, &ck("head")).unwrap());
    assert!(!s.ancestor_check("A", &head, &ck("feeling")).unwrap());
    assert!(!s.ancestor_check("A", &head, &ck("intensity")).unwrap());
    assert!(matches!(s.ancestor_check("A", &key("[0,9]"), &ck("feeling")), Err(StoreError::UnknownKey { .. })));
    assert!(matches!(s.ancestor_check("A", &head, &key("[0,9]")), Err(StoreError::UnknownKey { .. })));
}

/// Random axis plus up to `n` random records on valid keys.
fn random_store(rng: &mut ChaCha8Rng, n: usize, layered: bool) -> (Store, IndexedHierarchy) {
    let shape = Shape { max_nodes: 60, max_concepts: 20 };
    let h = if layered { random::layered_hierarchy(rng, shape) } else { random::valid_hierarchy(rng, shape) };
    let ix = index_hierarchy(&h.with_axis("R", "random")).unwrap();
    let mut s = Store::in_memory().unwrap();
    s.register_axis(&ix).unwrap();
    let mut valid: Vec<Key> = ix.node_keys().values().cloned().collect();
    valid.extend(ix.concept_keys().values().cloned());
    let mut written = 0;
    let mut sec = 0;
    while written < n {
        let k = rng.gen_range(1..=4).min(n - written);
        let records = (0..k)
            .map(|_| {
                let kk = valid.choose(rng).unwrap().clone();
                if rng.gen_bool(0.2) { InstanceRecord::negated("R", kk) } else { InstanceRecord::affirmed("R", kk) }
            })
            .collect();
        s.put_episode(&episode(&format!("e{}", sec % 37), sec, records)).unwrap();
        written += k;
        sec += 1;
    }
    (s, ix)
}

#[test]
fn query_by_key_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for round in 0..6 {
        let (s, ix) = random_store(&mut rng, if round == 0 { 1000 } else { 300 }, false);
        let all = s.all_records().unwrap();
        let mut queries: Vec<Key> = ix.concept_keys().values().cloned().collect();
        queries.extend(ix.node_keys().values().take(10).cloned());
        for _ in 0..20 {
            let len = rng.gen_range(1..=5);
            queries.push(random::key(&mut rng, len, 4, 0.4));
        }
        for q in &queries {
            let mut got: Vec<_> = s.query_by_key("R", q).unwrap();
            let mut want: Vec<_> =
                all.iter().filter(|(_, r)| !r.orphaned && oracle::partially_unifiable(q, &r.node_key)).cloned().collect();
            got.sort_by(|a, b| (&a.0, a.1.node_key.to_string()).cmp(&(&b.0, b.1.node_key.to_string())));
            want.sort_by(|a, b| (&a.0, a.1.node_key.to_string()).cmp(&(&b.0, b.1.node_key.to_string())));
            assert_eq!(got, want, "query {q}");
        }
    }
}

#[test]
fn ancestor_check_walks_the_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut layered_axes = 0;
    for layered in [false, true] {
        for _ in 0..8 {
            let (s, ix) = random_store(&mut rng, 1, layered);
            let h = ix.hierarchy();
            let agrees_with_pu = ix.is_layered();
            layered_axes += usize::from(agrees_with_pu);
            for (n, nk) in ix.node_keys() {
                let above: Vec<ConceptName> = h.root_path(*n).iter().map(|m| h.concept_of(*m).clone()).collect();
                for (c, ck) in ix.concept_keys() {
                    let got = s.ancestor_check("R", nk, ck).unwrap();
                    // oracle: some node on the root path is an instance of the concept key
                    let want = h.root_path(*n).iter().any(|m| is_instance(ix.node_key(*m).unwrap(), ck));
                    assert_eq!(got, want);
                    // instance keys only arise at nodes labelled with the concept
                    assert_eq!(got, above.contains(c), "{c} above {nk}");
                    if agrees_with_pu {
                        assert_eq!(got, semindex_core::keys::partially_unifiable(ck, nk), "{c} {ck} {nk}");
                    }
                }
            }
        }
    }
    assert!(layered_axes >= 4, "{layered_axes}");
}

#[test]
fn multiaxial_query_matches_scan() {
    let mut s = seeded();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = s.axis("A").unwrap();
    let t = s.axis("T").unwrap();
    let a_keys: Vec<Key> = a.index.node_keys().values().cloned().collect();
    let t_keys: Vec<Key> = t.index.node_keys().values().cloned().collect();
    for i in 0..200 {
        let mut records = vec![InstanceRecord::affirmed("A", a_keys.choose(&mut rng).unwrap().clone())];
        if rng.gen_bool(0.6) {
            let k = t_keys.choose(&mut rng).unwrap().clone();
            records.push(if rng.gen_bool(0.3) { InstanceRecord::negated("T", k) } else { InstanceRecord::affirmed("T", k) });
        }
        s.put_episode(&episode(&format!("m{i}"), i, records)).unwrap();
    }
    for text in ["[(A[0,0])]", "[(A[0,0,0]),(T[0,1])]", "[(T[0,x,0])],[(A[0,1])]", "[(A[0,x,x,x])]"] {
        let expr = parse_multiaxial(text).unwrap();
        let got = s.query_multiaxial(&expr).unwrap();
        let want: Vec<EpisodeKey> = s
            .episode_keys()
            .unwrap()
            .into_iter()
            .filter(|k| expression_matches(&expr, &s.get_episode(k).unwrap().unwrap().situation()))
            .collect();
        assert_eq!(got, want, "{text}");
        assert!(!want.is_empty(), "{text}");
    }
}

#[test]
fn remap_preserves_node_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut fresh = 0;
    let (mut totals, mut orphans) = (0, 0);
    for _ in 0..30 {
        let (mut s, mut ix) = random_store(&mut rng, 60, false);
        for _ in 0..3 {
            let before = s.all_records().unwrap();
            let Some(edit) = random::valid_edit(&mut rng, ix.hierarchy(), &mut fresh) else { continue };
            let (next, change) = match edit {
                Edit::Insert { parent, concept } => insert_node(&ix, parent, concept).unwrap(),
                Edit::Delete { node } => delete_node(&ix, node).unwrap(),
            };
            let report = s.apply_maintenance("R", &next, &change).unwrap();
            let after = s.all_records().unwrap();
            assert_eq!(before.len(), after.len());
            let newly_orphaned = before.iter().zip(&after).filter(|(b, a)| !b.1.orphaned && a.1.orphaned).count();
            assert_eq!(report.orphaned, newly_orphaned);
            for ((kb, b), (ka, a)) in before.iter().zip(&after) {
                assert_eq!(kb, ka);
                if b.orphaned {
                    assert!(a.orphaned);
                    continue;
                }
                // the record's anchor decides, and it is interpreted against the new tree
                let target = match b.path.as_ref().unwrap() {
                    InstancePath::Node(p) => next.hierarchy().resolve_path(p).map(|n| next.node_key(n).unwrap().clone()),
                    InstancePath::Concept(c) => next.concept_key(c).cloned(),
                };
                match target {
                    Some(k) => assert_eq!((a.orphaned, &a.node_key), (false, &k)),
                    None => assert!(a.orphaned),
                }
            }
            assert_eq!(s.axis("R").unwrap().index.version(), next.version());
            totals += report.rewritten + report.unchanged + report.orphaned;
            orphans += report.orphaned;
            ix = next;
        }
        // replaying an old change set is refused
        let stale = semindex_core::ChangeSet { from_version: 0, to_version: 1, ..Default::default() };
        assert!(matches!(s.apply_maintenance("R", &ix, &stale), Err(StoreError::VersionMismatch { .. })));
    }
    assert!(totals > 0 && orphans > 0, "{totals} {orphans}");
}

#[test]
fn update_then_remap_separately() {
    let mut s = seeded();
    let st = s.axis("T").unwrap();
    let chronic = st.index.hierarchy().resolve_path(&["time".into(), "chronic".into()]).unwrap();
    let recurring = node_key(&s, "T", &["time", "chronic", "recurring"]);
    s.put_episode(&episode("r", 0, vec![InstanceRecord::affirmed("T", recurring.clone())])).unwrap();
    let (next, change) = insert_node(&st.index, chronic, "acute".into()).unwrap();
    s.update_axis("T", &next, &change).unwrap();
    // stale until remapped
    assert_eq!(s.all_records().unwrap()[0].1.node_key, recurring);
    let report = s.remap_instances("T", &change).unwrap();
    assert_eq!(report.rewritten + report.unchanged, 1);
    let again = s.remap_instances("T", &change).unwrap();
    assert_eq!(again, RemapReport::default());
    let (_, del) = delete_node(&next, next.hierarchy().resolve_path(&["time".into(), "chronic".into()]).unwrap()).unwrap();
    assert!(matches!(s.remap_instances("T", &del), Err(StoreError::VersionMismatch { .. })));
}

#[test]
fn path_free_records_survive_unaffected_edits_only() {
    let mut s = Store::open(":memory:", StoreConfig { store_paths: false }).unwrap();
    s.register_axis(&indexed(TIME)).unwrap();
    let acute = node_key(&s, "T", &["time", "acute"]);
    let recurring = node_key(&s, "T", &["time", "chronic", "recurring"]);
    s.put_episode(&episode("a", 0, vec![InstanceRecord::affirmed("T", acute.clone())])).unwrap();
    s.put_episode(&episode("b", 1, vec![InstanceRecord::affirmed("T", recurring)])).unwrap();
    let st = s.axis("T").unwrap();
    let node = st.index.hierarchy().resolve_path(&["time".into(), "chronic".into(), "recurring".into()]).unwrap();
    let (next, change) = delete_node(&st.index, node).unwrap();
    let report = s.apply_maintenance("T", &next, &change).unwrap();
    assert_eq!((report.unchanged, report.orphaned), (1, 1));
    assert_eq!(s.orphans("T").unwrap().len(), 1);
    assert_eq!(s.query_by_key("T", &key("[0]")).unwrap().len(), 1);
}

#[test]
fn case_retrieval_matches_brute_force() {
    let mut s = seeded();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let a_keys: Vec<Key> = s.axis("A").unwrap().index.node_keys().values().cloned().collect();
    let t_keys: Vec<Key> = s.axis("T").unwrap().index.node_keys().values().cloned().collect();
    let mut sec = 0;
    for c in 0..60 {
        let mut problem = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            let mut records = vec![InstanceRecord::affirmed("A", a_keys.choose(&mut rng).unwrap().clone())];
            if rng.gen_bool(0.5) {
                records.push(InstanceRecord::affirmed("T", t_keys.choose(&mut rng).unwrap().clone()));
            }
            problem.push(s.put_episode(&episode(&format!("c{c}"), sec, records)).unwrap());
            sec += 1;
        }
        let case = Case {
            id: 0,
            problem,
            solution: vec![InstanceRecord::affirmed("A", a_keys[0].clone())],
            assessment: Some(Assessment { text: Some("ok".into()), score: Some(0.5) }),
        };
        assert_eq!(s.add_case(&case).unwrap(), c + 1);
    }
    assert_eq!(s.get_case(3).unwrap().id, 3);
    assert!(matches!(s.get_case(999), Err(StoreError::UnknownCase(999))));
    for mode in [SequenceMode::Latest, SequenceMode::Mean] {
        for _ in 0..20 {
            let q = random::situation(&mut rng, 3, &["A", "T"]);
            let k = rng.gen_range(1..=8);
            let got: Vec<(i64, f64)> =
                s.retrieve(&q, k, &DefaultSimilarity, mode).unwrap().into_iter().map(|(c, x)| (c.id, x)).collect();
            let mut want: Vec<(i64, f64)> = s
                .cases()
                .unwrap()
                .iter()
                .map(|c| (c.id, problem_similarity(&DefaultSimilarity, &q, &s.problem_situations(c).unwrap(), mode)))
                .collect();
            want.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            want.truncate(k);
            assert_eq!(got, want);
        }
    }
}

#[test]
fn dconcept_sets_check_axes() {
    let mut s = seeded();
    assert!(matches!(
        s.put_dconcepts("x", "dconcept \"a\":\n  requires [(Q[0])]\n"),
        Err(StoreError::UnknownAxis(_))
    ));
    assert!(s.put_dconcepts("x", "dconcept \"a\" parent \"b\":\n").is_err());
    assert!(matches!(s.get_dconcepts("x"), Err(StoreError::UnknownDConcepts(_))));
}

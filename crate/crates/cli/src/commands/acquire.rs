//! `generate` and `scrape`: run acquisitions and record them in an index
//! next to the images. Entries already complete in an existing index are
//! kept, so an interrupted run resumes where it stopped.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use mapforensics_core::acquisition::fixture::query_slug;
use mapforensics_core::acquisition::{
    generate_image, search_images, AcquiredImage, AcquisitionError, FixtureGenerator, FixtureSearch, GenerationBackend, GenerationRequest,
    LiveGenerationClient, LiveSearchClient, RetryPolicy, SearchBackend, SearchRequest,
};
use mapforensics_core::corpus::{build_search_targets, repeat_indices, GenerationPlan, LevelQuotas};

use super::{load_vocabulary, write_sidecar, Context};
use crate::acquired::{self, Entry, Kind, Status};
use crate::args::{Backend, GenerateArgs, ScrapeArgs};
use crate::error::{CliError, ErrorClass};

fn retry_policy(max_retries: u32) -> RetryPolicy {
    RetryPolicy { max_retries, base_delay: Duration::from_secs(1) }
}

fn extension(bytes: &[u8]) -> &'static str {
    image::guess_format(bytes).ok().and_then(|f| f.extensions_str().first().copied()).unwrap_or("img")
}

fn store_image(dir: &Path, stem: &str, image: &AcquiredImage) -> Result<String, CliError> {
    let file = format!("{stem}.{}", extension(&image.bytes));
    let path = dir.join(&file);
    fs::create_dir_all(path.parent().expect("image path has a parent"))?;
    fs::write(&path, &image.bytes)?;
    Ok(file)
}

fn generation_backend(args: &GenerateArgs, offline: bool) -> Result<Box<dyn GenerationBackend>, CliError> {
    if offline || args.generator == Backend::Fixture {
        return Ok(match &args.fixtures {
            Some(root) => Box::new(FixtureGenerator::with_root(root)),
            None => Box::new(FixtureGenerator::procedural()),
        });
    }
    let client = LiveGenerationClient::from_env(args.generation_endpoint.clone(), &args.api_key_var)?
        .with_retry(retry_policy(args.max_retries))
        .with_size(args.image_size.clone());
    Ok(Box::new(client))
}

fn search_backend(args: &ScrapeArgs, offline: bool) -> Result<Box<dyn SearchBackend>, CliError> {
    if offline || args.searcher == Backend::Fixture {
        return Ok(match &args.fixtures {
            Some(root) => Box::new(FixtureSearch::new(root)),
            None => Box::new(FixtureSearch::procedural()),
        });
    }
    let endpoint = args
        .search_endpoint
        .clone()
        .ok_or_else(|| CliError::new(ErrorClass::Config, "the live searcher needs search_endpoint"))?;
    let key = match &args.search_api_key_var {
        Some(var) => Some(std::env::var(var).map_err(|_| CliError::new(ErrorClass::Acquisition, format!("credential variable {var} is not set")))?),
        None => None,
    };
    Ok(Box::new(LiveSearchClient::new(endpoint, key)?.with_retry(retry_policy(args.max_retries))))
}

pub fn generate(args: &GenerateArgs, ctx: &mut Context) -> Result<(), CliError> {
    let (plan, prompts) = GenerationPlan::load(&args.plan)?;
    let samples = repeat_indices(&prompts);
    let backend = generation_backend(args, ctx.offline)?;
    let dir = &args.generated_dir;
    fs::create_dir_all(dir)?;

    let previous: HashMap<u32, Entry> = acquired::load_existing(dir, Kind::Generated)?.into_iter().map(|e| (e.position, e)).collect();
    let mut entries: Vec<Entry> = Vec::with_capacity(plan.total());
    let (mut fresh, mut reused, mut rejected) = (0usize, 0usize, 0usize);

    for (i, ((spec, prompt), sample)) in plan.entries.iter().zip(&prompts).zip(&samples).enumerate() {
        let position = i as u32;
        if let Some(prev) = previous.get(&position) {
            if prev.prompt.as_deref() == Some(prompt.as_str()) && prev.sample == Some(*sample) && prev.is_complete(dir) {
                entries.push(prev.clone());
                reused += 1;
                continue;
            }
        }
        let mut entry = Entry {
            region: spec.region.name.clone(),
            level: spec.region.level,
            position,
            prompt: Some(prompt.clone()),
            sample: Some(*sample),
            query: None,
            status: Status::Ok,
            file: None,
            origin: None,
            source_detail: None,
            note: None,
        };
        let request = GenerationRequest::new(prompt.clone(), args.model_id.clone())?.with_sample(*sample);
        match generate_image(&request, backend.as_ref()) {
            Ok(image) => {
                entry.file = Some(store_image(dir, &format!("{i:05}"), &image)?);
                entry.origin = Some(image.origin);
                entry.source_detail = Some(image.source_detail);
                fresh += 1;
            }
            Err(AcquisitionError::ContentRejected(msg)) => {
                log::warn!("prompt {prompt:?} rejected: {msg}");
                entry.status = Status::Rejected;
                entry.note = Some(msg);
                rejected += 1;
            }
            Err(e) => {
                // Keep what was acquired so a rerun resumes here.
                let tail = (i as u32..plan.total() as u32).filter_map(|p| previous.get(&p).cloned());
                entries.extend(tail);
                acquired::save(dir, Kind::Generated, &entries)?;
                return Err(e.into());
            }
        }
        entries.push(entry);
        if (i + 1) % 500 == 0 {
            log::info!("generated {}/{}", i + 1, plan.total());
        }
    }

    let index = acquired::save(dir, Kind::Generated, &entries)?;
    write_sidecar(&index, &ctx.effective)?;
    writeln!(ctx.out, "generated {fresh} new, {reused} reused, {rejected} rejected; index {}", index.display())?;
    Ok(())
}

pub fn scrape(args: &ScrapeArgs, ctx: &mut Context) -> Result<(), CliError> {
    let vocab = load_vocabulary(args.vocabulary.as_deref())?;
    let [s, c, k] = args.search_quotas.0;
    let targets = build_search_targets(LevelQuotas::new(s, c, k), &vocab)?;
    let backend = search_backend(args, ctx.offline)?;
    let dir = &args.searched_dir;
    fs::create_dir_all(dir)?;

    let mut previous: HashMap<String, Vec<Entry>> = HashMap::new();
    for e in acquired::load_existing(dir, Kind::Searched)? {
        previous.entry(e.query.clone().unwrap_or_default()).or_default().push(e);
    }
    let mut entries = Vec::new();
    let (mut images, mut reused, mut empty) = (0usize, 0usize, 0usize);

    for (t, target) in targets.iter().enumerate() {
        if let Some(prev) = previous.get(&target.query) {
            if prev.iter().all(|e| e.is_complete(dir)) {
                entries.extend(prev.iter().cloned());
                reused += 1;
                continue;
            }
        }
        let request = SearchRequest::new(target.query.clone(), target.k)?;
        let outcome = match search_images(&request, backend.as_ref()) {
            Ok(outcome) => outcome,
            Err(e) => {
                let tail = targets[t..].iter().filter_map(|t| previous.get(&t.query)).flatten().cloned();
                entries.extend(tail);
                acquired::save(dir, Kind::Searched, &entries)?;
                return Err(e.into());
            }
        };
        if let Some(w) = &outcome.warning {
            log::warn!("{}: {w}", target.query);
        }
        let base = Entry {
            region: target.region.name.clone(),
            level: target.region.level,
            position: 0,
            prompt: None,
            sample: None,
            query: Some(target.query.clone()),
            status: Status::NoResults,
            file: None,
            origin: None,
            source_detail: None,
            note: outcome.warning.clone(),
        };
        if outcome.images.is_empty() {
            entries.push(base);
            empty += 1;
            continue;
        }
        let slug = query_slug(&target.query);
        for image in &outcome.images {
            let rank = image.rank.expect("search results carry ranks");
            entries.push(Entry {
                position: rank,
                status: Status::Ok,
                file: Some(store_image(dir, &format!("{slug}/{rank}"), image)?),
                origin: Some(image.origin),
                source_detail: Some(image.source_detail.clone()),
                note: None,
                ..base.clone()
            });
            images += 1;
        }
    }

    let index = acquired::save(dir, Kind::Searched, &entries)?;
    write_sidecar(&index, &ctx.effective)?;
    writeln!(
        ctx.out,
        "searched {} queries: {images} new images, {reused} queries reused, {empty} without results; index {}",
        targets.len(),
        index.display()
    )?;
    Ok(())
}

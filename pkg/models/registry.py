"""
Registry ingest

Parses registry study documents (public v2 structure) into validated StudyRecords,
applies the trial selection filter, extracts feature and auxiliary rows and
persists the resulting Dataset as versioned newline-delimited JSON.
"""
import json
import logging
from datetime import date
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic.alias_generators import to_camel

from models.encodings import (ArmGroupType, InterventionType, Masking, OverallStatus, Phase,
                              PrimaryPurpose, Sex, SponsorClass, StudyType, sort_by_id)
from models.errors import (ConstraintViolation, DataError, DatasetIOError, InvalidEnumValue,
                           MalformedDocument, SchemaVersionMismatch)
from models.records import (AdverseEventEntry, ArmGroup, AuxiliaryRow, Dataset, DatasetEntry,
                            DesignInfo, EligibilityInfo, EventGroup, FeatureRow, InterventionInfo,
                            NCT_PATTERN, Rejection, StudyRecord)
from utils.date_utils import parse_registry_date

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DATASET_KIND = 'ctdr-dataset'
INCLUDED_STATUSES = (OverallStatus.COMPLETED, OverallStatus.TERMINATED)
DOCUMENT_SUFFIXES = ('.json', '.jsonl', '.ndjson')
LARGE_DOC_URL = 'https://cdn.clinicaltrials.gov/large-docs/{bucket}/{nct_id}/{filename}'


# Wire structure of a v2 study document. Unknown keys are ignored, closed
# value sets are enforced through the enum types.
class _Wire(BaseModel):
    model_config = ConfigDict(extra='ignore', alias_generator=to_camel, populate_by_name=True)


class _DateStruct(_Wire):
    date: Optional[str] = None


class _Identification(_Wire):
    nct_id: str = Field(pattern=NCT_PATTERN)
    brief_title: Optional[str] = None


class _Status(_Wire):
    overall_status: OverallStatus
    start_date_struct: Optional[_DateStruct] = None
    primary_completion_date_struct: Optional[_DateStruct] = None
    completion_date_struct: Optional[_DateStruct] = None
    study_first_submit_date: Optional[str] = None


class _Sponsor(_Wire):
    name: Optional[str] = None
    sponsor_class: Optional[SponsorClass] = Field(None, alias='class')


class _SponsorCollaborators(_Wire):
    lead_sponsor: Optional[_Sponsor] = None


class _Oversight(_Wire):
    oversight_has_dmc: Optional[bool] = None


class _Description(_Wire):
    brief_summary: Optional[str] = None
    detailed_description: Optional[str] = None


class _Conditions(_Wire):
    conditions: List[str] = Field(default_factory=list)
    keywords: List[str] = Field(default_factory=list)


class _MaskingInfo(_Wire):
    masking: Optional[Masking] = None


class _DesignDetails(_Wire):
    allocation: Optional[str] = None
    intervention_model: Optional[str] = None
    primary_purpose: Optional[PrimaryPurpose] = None
    masking_info: Optional[_MaskingInfo] = None


class _Enrollment(_Wire):
    count: Optional[int] = Field(None, ge=0)


class _Design(_Wire):
    study_type: StudyType
    phases: Optional[List[Phase]] = None
    design_info: Optional[_DesignDetails] = None
    enrollment_info: Optional[_Enrollment] = None


class _ArmGroup(_Wire):
    label: str
    group_type: Optional[ArmGroupType] = Field(None, alias='type')
    description: Optional[str] = None


class _Intervention(_Wire):
    intervention_type: InterventionType = Field(alias='type')
    name: str
    description: Optional[str] = None


class _ArmsInterventions(_Wire):
    arm_groups: List[_ArmGroup] = Field(default_factory=list)
    interventions: List[_Intervention] = Field(default_factory=list)


class _Eligibility(_Wire):
    sex: Optional[Sex] = None
    healthy_volunteers: Optional[bool] = None


class _Location(_Wire):
    facility: Optional[str] = None
    city: Optional[str] = None
    state: Optional[str] = None
    country: Optional[str] = None


class _ContactsLocations(_Wire):
    locations: List[_Location] = Field(default_factory=list)


class _Protocol(_Wire):
    identification_module: _Identification
    status_module: _Status
    design_module: _Design
    sponsor_collaborators_module: Optional[_SponsorCollaborators] = None
    oversight_module: Optional[_Oversight] = None
    description_module: Optional[_Description] = None
    conditions_module: Optional[_Conditions] = None
    arms_interventions_module: Optional[_ArmsInterventions] = None
    eligibility_module: Optional[_Eligibility] = None
    contacts_locations_module: Optional[_ContactsLocations] = None


class _EventGroup(_Wire):
    id: str
    title: Optional[str] = None
    serious_num_at_risk: Optional[int] = Field(None, ge=0)
    other_num_at_risk: Optional[int] = Field(None, ge=0)


class _EventStat(_Wire):
    group_id: str
    num_affected: Optional[int] = Field(None, ge=0)
    num_at_risk: Optional[int] = Field(None, ge=0)


class _Event(_Wire):
    term: str
    stats: List[_EventStat] = Field(default_factory=list)


class _AdverseEvents(_Wire):
    event_groups: List[_EventGroup] = Field(default_factory=list)
    serious_events: List[_Event] = Field(default_factory=list)
    other_events: List[_Event] = Field(default_factory=list)


class _Results(_Wire):
    adverse_events_module: Optional[_AdverseEvents] = None


class _LargeDoc(_Wire):
    has_protocol: bool = False
    has_sap: bool = False
    has_icf: bool = False
    filename: Optional[str] = None


class _LargeDocuments(_Wire):
    large_docs: List[_LargeDoc] = Field(default_factory=list)


class _Documents(_Wire):
    large_document_module: Optional[_LargeDocuments] = None


class _StudyDocument(_Wire):
    protocol_section: _Protocol
    results_section: Optional[_Results] = None
    document_section: Optional[_Documents] = None
    has_results: bool = False


def _field_name(loc: Tuple[Any, ...]) -> str:
    names = [str(part) for part in loc if not isinstance(part, int)]
    return names[-1] if names else '?'


def _raise_validation(exc: ValidationError, context: str):
    for error in exc.errors():
        if error['type'] == 'enum':
            raise InvalidEnumValue(_field_name(error['loc']), error['input']) from None
    first = exc.errors()[0]
    location = '.'.join(str(part) for part in first['loc'])
    raise MalformedDocument(f'{context}: {location}: {first["msg"]}') from None


def _adverse_events(results: Optional[_Results]) -> Tuple[Tuple[EventGroup, ...], Tuple[AdverseEventEntry, ...]]:
    module = results.adverse_events_module if results else None
    if module is None:
        return (), ()

    groups = tuple(
        EventGroup(group_id=group.id, title=group.title,
                   serious_num_at_risk=group.serious_num_at_risk,
                   other_num_at_risk=group.other_num_at_risk)
        for group in module.event_groups
    )
    by_id = {group.group_id: group for group in groups}

    entries = []
    for serious, events in ((True, module.serious_events), (False, module.other_events)):
        for event in events:
            for stat in event.stats:
                at_risk = stat.num_at_risk
                if at_risk is None and stat.group_id in by_id:
                    group = by_id[stat.group_id]
                    at_risk = group.serious_num_at_risk if serious else group.other_num_at_risk
                entries.append(AdverseEventEntry(
                    arm_group_id=stat.group_id,
                    event_term=event.term,
                    num_affected=stat.num_affected or 0,
                    num_at_risk=at_risk or 0,
                    serious=serious,
                ))
    return groups, tuple(entries)


def _documents(nct_id: str, section: Optional[_Documents]) -> Dict[str, Any]:
    docs = section.large_document_module.large_docs if section and section.large_document_module else []
    links = tuple(
        LARGE_DOC_URL.format(bucket=nct_id[-2:], nct_id=nct_id, filename=doc.filename)
        for doc in docs if doc.has_protocol and doc.filename
    )
    return {
        'has_protocol': any(doc.has_protocol for doc in docs),
        'has_sap': any(doc.has_sap for doc in docs),
        'has_icf': any(doc.has_icf for doc in docs),
        'protocol_pdf_links': links,
    }


def _location_text(locations: List[_Location]) -> Optional[str]:
    parts = []
    for location in locations:
        fields = [location.facility, location.city, location.state, location.country]
        text = ', '.join(field for field in fields if field)
        if text:
            parts.append(text)
    return '; '.join(parts) if parts else None


def _date(struct: Optional[_DateStruct], field: str, nct_id: str) -> Optional[date]:
    return parse_registry_date(struct.date if struct else None, field=field, context=nct_id)


def _build_record(doc: _StudyDocument) -> StudyRecord:
    protocol = doc.protocol_section
    nct_id = protocol.identification_module.nct_id
    status = protocol.status_module
    design = protocol.design_module
    details = design.design_info or _DesignDetails()
    arms = protocol.arms_interventions_module or _ArmsInterventions()
    description = protocol.description_module or _Description()
    conditions = protocol.conditions_module or _Conditions()
    eligibility = protocol.eligibility_module or _Eligibility()
    locations = (protocol.contacts_locations_module or _ContactsLocations()).locations
    sponsor = (protocol.sponsor_collaborators_module or _SponsorCollaborators()).lead_sponsor or _Sponsor()

    phases = None
    if design.phases:
        phases = tuple(Phase(value) for value in sort_by_id('phases', [phase.value for phase in design.phases]))

    event_groups, adverse_events = _adverse_events(doc.results_section)

    return StudyRecord(
        nct_id=nct_id,
        brief_title=protocol.identification_module.brief_title,
        overall_status=status.overall_status,
        study_type=design.study_type,
        has_results=doc.has_results,
        start_date=_date(status.start_date_struct, 'start_date', nct_id),
        completion_date=_date(status.completion_date_struct, 'completion_date', nct_id),
        primary_completion_date=_date(status.primary_completion_date_struct, 'primary_completion_date', nct_id),
        first_submit_date=parse_registry_date(status.study_first_submit_date, 'first_submit_date', nct_id),
        design=DesignInfo(
            primary_purpose=details.primary_purpose,
            masking=details.masking_info.masking if details.masking_info else None,
            allocation=details.allocation,
            intervention_model=details.intervention_model,
            phases=phases,
            oversight_has_dmc=protocol.oversight_module.oversight_has_dmc if protocol.oversight_module else None,
        ),
        arms=tuple(ArmGroup(label=arm.label, group_type=arm.group_type, description=arm.description)
                   for arm in arms.arm_groups),
        interventions=tuple(InterventionInfo(intervention_type=item.intervention_type, name=item.name,
                                             description=item.description)
                            for item in arms.interventions),
        eligibility=EligibilityInfo(sex=eligibility.sex, healthy_volunteers=eligibility.healthy_volunteers),
        enrollment_count=design.enrollment_info.count if design.enrollment_info else None,
        conditions=tuple(conditions.conditions),
        keywords=tuple(conditions.keywords),
        brief_summary=description.brief_summary,
        detailed_description=description.detailed_description,
        event_groups=event_groups,
        adverse_events=adverse_events,
        locations_count=len(locations),
        location_text=_location_text(locations),
        sponsor_name=sponsor.name,
        sponsor_class=sponsor.sponsor_class,
        **_documents(nct_id, doc.document_section),
    )


def parse_study(document_text: Union[str, bytes, Dict[str, Any]], source: str = '') -> StudyRecord:
    """Parse one serialized study document into a validated StudyRecord.

    Args:
        document_text: JSON text of one study document (an already decoded
            mapping is accepted as well)
        source: Where the document came from, used in error messages

    Returns:
        StudyRecord: validated record

    Raises:
        MalformedDocument: not JSON, or not the expected document structure
        InvalidEnumValue: a closed-set field holds an unknown value
        ConstraintViolation: a cross-field constraint fails
    """
    context = source or 'document'
    if isinstance(document_text, dict):
        payload = document_text
    else:
        try:
            payload = json.loads(document_text)
        except (ValueError, TypeError) as exc:
            raise MalformedDocument(f'{context}: not valid JSON ({exc})') from None
    if not isinstance(payload, dict):
        raise MalformedDocument(f'{context}: expected a JSON object')

    try:
        doc = _StudyDocument.model_validate(payload)
    except ValidationError as exc:
        _raise_validation(exc, context)

    try:
        return _build_record(doc)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConstraintViolation(f'{context}: {_field_name(first["loc"])}: {first["msg"]}') from None


def passes_inclusion(record: StudyRecord, cutoff: date) -> bool:
    """Trial selection filter: completed or terminated interventional trials with
    posted results and a completion date, registered before the cutoff."""
    return (
        record.overall_status in INCLUDED_STATUSES
        and record.study_type is StudyType.INTERVENTIONAL
        and record.has_results
        and record.completion_date is not None
        and record.first_submit_date is not None
        and record.first_submit_date < cutoff
    )


def _joined(values: Iterable[Optional[str]], separator: str = '\n') -> Optional[str]:
    kept = [value for value in values if value]
    return separator.join(kept) if kept else None


def extract_features(record: StudyRecord) -> FeatureRow:
    """Build the pre-initiation feature row of a record.

    Absent fields stay None. Counts of arms and interventions are always present
    since an empty list is a count of zero.
    """
    design = record.design
    arm_types = [arm.group_type.value for arm in record.arms if arm.group_type is not None]
    intervention_types = [item.intervention_type.value for item in record.interventions]

    return FeatureRow(
        nct_id=record.nct_id,
        primary_purpose=design.primary_purpose.value if design.primary_purpose else None,
        masking=design.masking.value if design.masking else None,
        sex=record.eligibility.sex.value if record.eligibility.sex else None,
        phases=tuple(phase.value for phase in design.phases) if design.phases else None,
        arm_group_types=sort_by_id('armGroupTypes', arm_types) if arm_types else None,
        intervention_types=sort_by_id('interventionTypes', intervention_types) if intervention_types else None,
        healthy_volunteers=record.eligibility.healthy_volunteers,
        oversight_has_dmc=design.oversight_has_dmc,
        enrollment_count=record.enrollment_count,
        num_arms=len(record.arms),
        num_interventions=len(record.interventions),
        num_locations=record.locations_count,
        allocation=design.allocation,
        intervention_model=design.intervention_model,
        brief_summary=record.brief_summary,
        detailed_description=record.detailed_description,
        conditions=_joined(record.conditions, '; '),
        conditions_keywords=_joined(record.keywords, '; '),
        arm_descriptions=_joined(f'{arm.label}: {arm.description}' for arm in record.arms if arm.description),
        intervention_names=_joined((item.name for item in record.interventions), '; '),
        intervention_descriptions=_joined(item.description for item in record.interventions),
        location_details=record.location_text,
    )


def extract_auxiliary(record: StudyRecord) -> AuxiliaryRow:
    """Pass-through columns of a record, before labeling."""
    return AuxiliaryRow(
        nct_id=record.nct_id,
        overall_status=record.overall_status.value,
        lead_sponsor_class=record.sponsor_class.value if record.sponsor_class else None,
        lead_sponsor_name=record.sponsor_name,
        has_protocol=record.has_protocol,
        has_sap=record.has_sap,
        has_icf=record.has_icf,
        start_date=record.start_date,
        completion_date=record.completion_date,
        protocol_pdf_links=record.protocol_pdf_links,
    )


def expand_paths(paths: Iterable[Union[str, Path]]) -> List[Path]:
    files = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            files.extend(sorted(p for p in path.rglob('*') if p.is_file() and p.suffix in DOCUMENT_SUFFIXES))
        elif path.is_file():
            files.append(path)
        else:
            raise DatasetIOError(f'input path not found: {path}')
    return files


def _iter_documents(path: Path) -> Iterator[Tuple[str, str]]:
    try:
        text = path.read_text(encoding='utf-8')
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetIOError(f'cannot read {path}: {exc}') from None

    if path.suffix in ('.jsonl', '.ndjson'):
        for number, line in enumerate(text.splitlines(), start=1):
            if line.strip():
                yield f'{path}:{number}', line
    elif text.strip():
        yield str(path), text


def ingest_corpus(paths: Iterable[Union[str, Path]], cutoff: date) -> Dataset:
    """Parse, filter and extract every study document under the given paths.

    Args:
        paths: Files or directories; ``.jsonl``/``.ndjson`` files hold one
            document per line, other files one document each
        cutoff: Registration cutoff of the inclusion filter

    Returns:
        Dataset: included trials ordered by nct_id, with per-document rejections

    Raises:
        DatasetIOError: a path is missing or unreadable
    """
    records: Dict[str, StudyRecord] = {}
    rejections: List[Rejection] = []
    parsed = excluded = 0

    for path in expand_paths(paths):
        for source, text in _iter_documents(path):
            try:
                record = parse_study(text, source=source)
            except DataError as exc:
                logger.warning("rejected %s: %s", source, exc)
                rejections.append(Rejection(source=source, reason=str(exc)))
                continue
            parsed += 1
            if record.nct_id in records:
                reason = f'duplicate {record.nct_id}'
                logger.warning("rejected %s: %s", source, reason)
                rejections.append(Rejection(source=source, reason=reason))
                continue
            if not passes_inclusion(record, cutoff):
                excluded += 1
                continue
            records[record.nct_id] = record

    entries = tuple(
        DatasetEntry(features=extract_features(record), auxiliary=extract_auxiliary(record), record=record)
        for _, record in sorted(records.items())
    )
    logger.info("ingest: %d parsed, %d rejected, %d excluded, %d kept",
                parsed, len(rejections), excluded, len(entries))
    return Dataset(entries=entries, rejections=tuple(rejections), meta={'cutoff': cutoff.isoformat()})


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    """Write a Dataset as a schema-versioned newline-delimited JSON file."""
    header = {
        'kind': DATASET_KIND,
        'schema_version': SCHEMA_VERSION,
        'count': len(dataset),
        'meta': dataset.meta,
        'rejections': [[item.source, item.reason] for item in dataset.rejections],
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(entry.model_dump(mode='json', by_alias=True), sort_keys=True)
                 for entry in dataset.entries)
    try:
        Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')
    except OSError as exc:
        raise DatasetIOError(f'cannot write {path}: {exc}') from None


def load_dataset(path: Union[str, Path]) -> Dataset:
    """Read a Dataset written by save_dataset.

    Raises:
        DatasetIOError: unreadable file or corrupt row
        SchemaVersionMismatch: header missing or of another version
    """
    try:
        lines = Path(path).read_text(encoding='utf-8').splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetIOError(f'cannot read {path}: {exc}') from None

    try:
        header = json.loads(lines[0]) if lines else None
    except ValueError:
        header = None
    if not isinstance(header, dict) or header.get('kind') != DATASET_KIND:
        raise SchemaVersionMismatch(f'{path}: missing dataset header')
    if header.get('schema_version') != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f'{path}: schema version {header.get("schema_version")!r}, expected {SCHEMA_VERSION}')

    entries = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            entries.append(DatasetEntry.model_validate(json.loads(line)))
        except (ValueError, ValidationError) as exc:
            raise DatasetIOError(f'{path}:{number}: corrupt dataset row ({exc})') from None

    return Dataset(
        entries=tuple(entries),
        rejections=tuple(Rejection(source=source, reason=reason) for source, reason in header.get('rejections', [])),
        meta=dict(header.get('meta', {})),
    )
